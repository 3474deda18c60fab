use fpk_core::coeffs::{BoundedBox, DiffusionMatrixField, DriftField, SamplingSpec, ScalarField};
use fpk_core::fpk::{GridDensity, GridSpec, SolveOptions};
use fpk_core::stability::*;
use fpk_core::testfn::TestFunction;
use fpk_core::Error;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

fn normal(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (SQRT_2PI * var.sqrt())
}

/// Composite Simpson rule on [lo, hi] with `n` (even) panels.
fn simpson(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn grid1(n: usize) -> GridSpec {
    GridSpec::new(1, 8.0, n).unwrap()
}

#[test]
fn gaussian_shift_distance_matches_quadrature() {
    let g = grid1(2048);
    let p = GridDensity::gaussian(g, [0.0; 2], 1.0).unwrap();
    let q = GridDensity::gaussian(g, [0.1, 0.0], 1.0).unwrap();
    let oracle = simpson(-12.0, 12.0, 200_000, |x| {
        (1.0 + x.abs()) * (normal(x, 0.0, 1.0) - normal(x, 0.1, 1.0)).abs()
    });
    let d = weighted_l1_distance(&p, &q, 1.0).unwrap();
    assert!(((d - oracle) / oracle).abs() < 1e-4, "{d} vs {oracle}");
    assert_eq!(weighted_l1_distance(&p, &p, 1.0).unwrap(), 0.0);
    assert_eq!(d, weighted_l1_distance(&q, &p, 1.0).unwrap());
}

#[test]
fn distance_requires_a_shared_grid() {
    let p = GridDensity::gaussian(grid1(64), [0.0; 2], 1.0).unwrap();
    let q = GridDensity::gaussian(grid1(128), [0.0; 2], 1.0).unwrap();
    assert!(matches!(weighted_l1_distance(&p, &q, 1.0), Err(Error::Shape(_))));
}

#[test]
fn identical_coefficients_have_no_discrepancy() {
    let pair = CoefficientPair::identical(DiffusionMatrixField::identity(2), DriftField::ou(2, 1.0)).unwrap();
    let rho = GridDensity::gaussian(GridSpec::new(2, 8.0, 64).unwrap(), [0.0; 2], 1.0).unwrap();
    assert_eq!(rhs_discrepancy(&pair, &rho, 2.0, 1.0).unwrap(), (0.0, 0.0));
    let v = TestFunction::bump_times_square(2, 2.0);
    let dual = duality_check(&pair, &rho, &rho, &v).unwrap();
    assert_eq!((dual.difference_term, dual.coefficient_term), (0.0, 0.0));
}

#[test]
fn constant_diffusion_shift_is_measured_exactly() {
    let delta = 0.3;
    let a_mu = DiffusionMatrixField::scalar(ScalarField::constant(1, 1.0 + delta), 0.7).unwrap();
    let pair = CoefficientPair::new(
        a_mu,
        DriftField::ou(1, 1.0),
        DiffusionMatrixField::identity(1),
        DriftField::ou(1, 1.0),
    )
    .unwrap();
    let rho = GridDensity::gaussian(grid1(256), [0.0; 2], 1.0).unwrap();
    for r in [1.5, 2.0, 4.0] {
        let (diff, drift) = rhs_discrepancy(&pair, &rho, r, 1.0).unwrap();
        assert!((diff - delta).abs() < 1e-12);
        assert_eq!(drift, 0.0);
    }
    assert!(rhs_discrepancy(&pair, &rho, 1.0, 1.0).is_err());
}

#[test]
fn drift_term_matches_gaussian_moments() {
    // δ·∫|x|(1+|x|²)φ = δ·(E|x| + E|x|³) = 3δ√(2/π).
    let delta = 0.05;
    let pair = OuFamily::Drift.pair(1, delta).unwrap();
    let rho = GridDensity::gaussian(grid1(2048), [0.0; 2], 1.0).unwrap();
    let (diff, drift) = rhs_discrepancy(&pair, &rho, 2.0, 1.0).unwrap();
    let oracle = delta * 3.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert_eq!(diff, 0.0);
    assert!((drift - oracle).abs() < 1e-6, "{drift} vs {oracle}");
}

#[test]
fn zero_test_function_has_zero_duality_terms() {
    let pair = OuFamily::Drift.pair(1, 0.1).unwrap();
    let g = grid1(128);
    let p = GridDensity::gaussian(g, [0.0; 2], 1.0).unwrap();
    let q = GridDensity::gaussian(g, [0.0; 2], 1.0 / 1.1).unwrap();
    let v = TestFunction {
        dim: 1,
        center: [0.0; 2],
        scale: 2.0,
        poly: [0.0; 6],
    };
    assert_eq!(duality_check(&pair, &p, &q, &v).unwrap().residual, 0.0);
}

#[test]
fn duality_rejects_test_functions_reaching_the_boundary() {
    let pair = OuFamily::Drift.pair(1, 0.1).unwrap();
    let rho = GridDensity::gaussian(GridSpec::new(1, 4.0, 64).unwrap(), [0.0; 2], 1.0).unwrap();
    let v = TestFunction::bump(1, [3.0, 0.0], 1.0);
    assert!(matches!(
        duality_check(&pair, &rho, &rho, &v),
        Err(Error::Support { .. })
    ));
}

#[test]
fn duality_residual_converges_at_second_order() {
    for family in [OuFamily::Drift, OuFamily::Diffusion] {
        let pair = family.pair(1, 0.1).unwrap();
        let v = TestFunction::bump_times_square(1, 3.0);
        let conv = duality_convergence(&pair, &grid1(256), &v, 3, &SolveOptions::default()).unwrap();
        assert_eq!(conv.cells, vec![256, 512, 1024]);
        assert!(conv.order >= 1.8, "{family:?}: order {}", conv.order);
        let r0 = conv.reports[0].residual;
        assert!(
            r0 <= 10.0 * conv.discretization_error,
            "{r0} vs {}",
            conv.discretization_error
        );
    }
}

/// ∫(1+|x|)|N(0,1) − N(0,1/(1+δ))| by Simpson quadrature.
fn exact_ou_drift_distance(delta: f64) -> f64 {
    simpson(-12.0, 12.0, 200_000, |x| {
        (1.0 + x.abs()) * (normal(x, 0.0, 1.0 / (1.0 + delta)) - normal(x, 0.0, 1.0)).abs()
    })
}

#[test]
fn drift_sweep_is_first_order_and_matches_the_gaussian_oracle() {
    let deltas = [0.0, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let sweep = stability_sweep(
        |d| OuFamily::Drift.pair(1, d),
        &deltas,
        &grid1(1024),
        2.0,
        1.0,
        &SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(sweep.reports[0].lhs, 0.0);
    assert!(sweep.reports[0].c_hat_empirical.is_none());
    assert!((sweep.slope - 1.0).abs() <= 0.1, "slope {}", sweep.slope);
    assert!(sweep.c_hat_spread() <= 10.0);
    for rep in &sweep.reports[1..] {
        let oracle = exact_ou_drift_distance(rep.delta);
        assert!(
            ((rep.lhs - oracle) / oracle).abs() < 0.01,
            "δ={}: {} vs {oracle}",
            rep.delta,
            rep.lhs
        );
    }
    // Oracle slope.
    let (lo, hi) = (exact_ou_drift_distance(1e-3), exact_ou_drift_distance(1e-1));
    let oracle_slope = (hi / lo).ln() / 100f64.ln();
    assert!((sweep.slope - oracle_slope).abs() < 0.02);
}

#[test]
fn diffusion_sweep_is_first_order() {
    let deltas = [1e-3, 1e-2, 1e-1];
    let sweep = stability_sweep(
        |d| OuFamily::Diffusion.pair(1, d),
        &deltas,
        &grid1(512),
        2.0,
        1.0,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!((sweep.slope - 1.0).abs() <= 0.1, "slope {}", sweep.slope);
    assert!(sweep.c_hat_spread() <= 10.0);
}

#[test]
fn empirical_constant_is_refinement_stable() {
    let c = |n: usize| {
        let pair = OuFamily::Drift.pair(2, 0.05).unwrap();
        stability_report(
            &pair,
            &GridSpec::new(2, 8.0, n).unwrap(),
            2.0,
            1.0,
            0.05,
            &SolveOptions::default(),
        )
        .unwrap()
        .c_hat_empirical
        .unwrap()
    };
    let (c1, c2) = (c(64), c(128));
    assert!(((c1 - c2) / c2).abs() < 0.1, "{c1} vs {c2}");
}

#[test]
fn sweep_argument_validation() {
    let run = |deltas: &[f64]| {
        stability_sweep(
            |d| OuFamily::Drift.pair(1, d),
            deltas,
            &grid1(64),
            2.0,
            1.0,
            &SolveOptions::default(),
        )
    };
    assert!(run(&[0.1, 0.01]).is_err());
    assert!(run(&[-0.1, 0.1]).is_err());
    assert!(run(&[0.0, 0.1]).is_err());
    let failing = stability_sweep(
        |d| {
            if d > 0.05 {
                Err(Error::Confinement("test".into()))
            } else {
                OuFamily::Drift.pair(1, d)
            }
        },
        &[0.01, 0.1],
        &grid1(64),
        2.0,
        1.0,
        &SolveOptions::default(),
    );
    assert!(matches!(failing, Err(Error::AtDelta { delta, .. }) if delta == 0.1));
}

#[test]
fn perturbed_pairs_pass_condition_h_with_shared_parameters() {
    let region = BoundedBox::symmetric(1, 8.0);
    let sampling = SamplingSpec::new(BoundedBox::symmetric(1, 1.0), 4, 16, 3);
    for family in [OuFamily::Drift, OuFamily::Diffusion] {
        let pair = family.pair(1, 0.1).unwrap();
        let [mu, sigma] = pair.check_condition_h(&region, &sampling).unwrap();
        assert!(mu.passed() && sigma.passed());
        assert_eq!((mu.lambda, mu.beta2), (sigma.lambda, sigma.beta2));
    }
}
