use std::collections::BTreeMap;

use fpk_core::coeffs::{
    make_example_field, DiffusionMatrixField, DriftBounds, DriftField, ScalarField, Smoothness, Sym2,
};
use fpk_core::fpk::*;
use fpk_core::Error;

fn grid(d: usize, n: usize) -> GridSpec {
    GridSpec::new(d, 8.0, n).unwrap()
}

/// Cell-center samples of `f`, normalized by the cell sum.
fn sampled_density(g: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..g.len()).map(|i| f(&g.center(i)[..g.dim])).collect();
    let z: f64 = raw.iter().sum::<f64>() * g.cell_volume();
    raw.into_iter().map(|v| v / z).collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn exact_ou_matches_standard_gaussian() {
    let g = grid(1, 1024);
    let rho = solve_exact_1d(
        &ScalarField::constant(1, 1.0),
        &DriftField::ou(1, 1.0),
        &g,
        QuadratureSpec::default(),
    )
    .unwrap();
    let oracle = sampled_density(&g, |x| (-0.5 * x[0] * x[0]).exp());
    assert!(max_gap(rho.values(), &oracle) < 1e-12);
    assert!((rho.mass() - 1.0).abs() < 1e-12);
    let peak = rho.interpolate(&[0.0]);
    assert!((peak - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-4);
}

#[test]
fn exact_with_doubled_diffusion_has_variance_two() {
    let g = grid(1, 1024);
    let rho = solve_exact_1d(
        &ScalarField::constant(1, 2.0),
        &DriftField::ou(1, 1.0),
        &g,
        QuadratureSpec::default(),
    )
    .unwrap();
    let oracle = sampled_density(&g, |x| 0.5 * (-x[0] * x[0] / 4.0).exp());
    assert!(max_gap(rho.values(), &oracle) < 1e-12);
    assert!((moment(&rho, 2.0) - 2.0).abs() < 1e-3);
}

#[test]
fn zero_drift_on_bounded_interval_gives_inverse_diffusion() {
    let a = make_example_field("weierstrass-holder", &BTreeMap::new())
        .unwrap()
        .into_scalar()
        .unwrap();
    let bounds = DriftBounds {
        beta: 1.0,
        beta1: 1.0,
        beta2: 1.0,
        beta3: 1.0,
    };
    let b = DriftField::new(1, vec![ScalarField::constant(1, 0.0)], bounds).unwrap();
    let g = GridSpec::new(1, 4.0, 256).unwrap();
    let rho = solve_exact_1d_bounded(&a, &b, &g, QuadratureSpec::default()).unwrap();
    let a2 = a.clone();
    let oracle = sampled_density(&g, move |x| 1.0 / a2.eval(x));
    assert!(max_gap(rho.values(), &oracle) < 1e-12);
    // The truncated solver refuses a density that does not decay.
    assert!(matches!(
        solve_exact_1d(&a, &b, &g, QuadratureSpec::default()),
        Err(Error::UnderTruncation { .. }) | Err(Error::Confinement(_))
    ));
}

#[test]
fn exact_solver_rejects_nonpositive_diffusion() {
    let a = ScalarField::from_fn(1, Smoothness::Smooth, |x| x[0]);
    let err = solve_exact_1d(&a, &DriftField::ou(1, 1.0), &grid(1, 64), QuadratureSpec::default());
    assert!(matches!(err, Err(Error::Ellipticity(_))));
}

#[test]
fn grid_solver_matches_exact_in_one_dimension() {
    let g = grid(1, 2048);
    let a = DiffusionMatrixField::identity(1);
    let b = DriftField::ou(1, 1.0);
    let num = solve_grid(&a, &b, &g).unwrap();
    let exact = solve_exact_1d(&a.entries()[0], &b, &g, QuadratureSpec::default()).unwrap();
    let l1: f64 = num
        .values()
        .iter()
        .zip(exact.values())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * g.h();
    assert!(l1 <= 1e-3, "L1 gap {l1}");
    assert!((num.mass() - 1.0).abs() < 1e-12);
}

#[test]
fn grid_error_is_second_order() {
    let a = DiffusionMatrixField::identity(1);
    let b = DriftField::ou(1, 1.0);
    let err = |n: usize| {
        let g = grid(1, n);
        let num = solve_grid(&a, &b, &g).unwrap();
        let ex = solve_exact_1d(&a.entries()[0], &b, &g, QuadratureSpec::default()).unwrap();
        num.cells()
            .zip(ex.values())
            .map(|((x, u), v)| (1.0 + x[0].abs()) * (u - v).abs())
            .sum::<f64>()
            * g.h()
    };
    let (e1, e2) = (err(256), err(512));
    assert!((3.0..=5.0).contains(&(e1 / e2)), "ratio {}", e1 / e2);
}

#[test]
fn two_dimensional_ou_is_a_product_density() {
    let g = grid(2, 128);
    let rho = solve_grid(&DiffusionMatrixField::identity(2), &DriftField::ou(2, 1.0), &g).unwrap();
    let g1 = grid(1, 128);
    let one = solve_exact_1d(
        &ScalarField::constant(1, 1.0),
        &DriftField::ou(1, 1.0),
        &g1,
        QuadratureSpec::default(),
    )
    .unwrap();
    let gap = rho
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let (i, j) = g.split(idx);
            (v - one.values()[i] * one.values()[j]).abs()
        })
        .fold(0.0, f64::max);
    assert!(gap <= 1e-3, "gap {gap}");
}

#[test]
fn anisotropic_constant_diffusion_gives_gaussian_with_covariance_a() {
    let m = Sym2 {
        a11: 1.5,
        a12: 0.5,
        a22: 1.0,
    };
    let a = DiffusionMatrixField::constant(2, m).unwrap();
    let g = grid(2, 128);
    let rho = solve_grid(&a, &DriftField::ou(2, 1.0), &g).unwrap();
    let det = m.a11 * m.a22 - m.a12 * m.a12;
    let oracle = sampled_density(&g, |x| {
        let q = (m.a22 * x[0] * x[0] - 2.0 * m.a12 * x[0] * x[1] + m.a11 * x[1] * x[1]) / det;
        (-0.5 * q).exp()
    });
    let gap = max_gap(rho.values(), &oracle);
    assert!(gap <= 2e-3, "gap {gap}");
    let cov12 = rho.integrate(|x| x[0] * x[1]);
    assert!((cov12 - m.a12).abs() < 1e-2, "cov12 {cov12}");
}

#[test]
fn gaussian_moments_and_harnack_ratio() {
    let rho = GridDensity::gaussian(grid(1, 2048), [0.0; 2], 1.0).unwrap();
    assert_eq!(moment(&rho, 0.0), rho.mass());
    assert!((moment(&rho, 2.0) - 1.0).abs() < 1e-4);
    assert!((moment(&rho, 1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-4);
    let report = moment_report(&rho, &[0.0, 1.0, 2.0, 4.0]).unwrap();
    assert!((report.moments[3].1 - 3.0).abs() < 1e-3);
    let h = harnack_ratio(&rho, 1.0).unwrap();
    assert!((h - 0.5f64.exp()).abs() < 1e-2, "{h}");
    assert!(moment_report(&rho, &[-1.0]).is_err());
}

#[test]
fn harnack_of_constant_density_is_one() {
    let rho = GridDensity::from_fn(grid(2, 32), |_| 1.0).unwrap();
    assert_eq!(harnack_ratio(&rho, 3.0).unwrap(), 1.0);
    assert!(harnack_ratio(&rho, 9.0).is_err());
    let mut v = vec![1.0; 32];
    v[16] = 0.0;
    let hole = GridDensity::from_values(grid(1, 32), v).unwrap();
    assert!(matches!(harnack_ratio(&hole, 1.0), Err(Error::Degenerate(_))));
}

#[test]
fn uniform_density_lp_norm_closed_form() {
    for d in 1..=2 {
        let g = grid(d, 64);
        let rho = GridDensity::from_fn(g, |_| 1.0).unwrap();
        let level = 1.0 / 16f64.powi(d as i32);
        for p in [1.5, 2.0, 4.0] {
            let v = weighted_lp_norm(&rho, 0.0, p).unwrap();
            let expected = level.powf((p - 1.0) / p);
            assert!((v - expected).abs() < 1e-12 * expected.max(1.0));
        }
        assert!(weighted_lp_norm(&rho, 0.0, 1.0).is_err());
        assert!(weighted_lp_norm(&rho, 0.0, f64::INFINITY).is_err());
        assert_eq!(weighted_sup_norm(&rho, 0.0).unwrap(), level);
    }
}

#[test]
fn weighted_norm_in_two_dimensions_is_refinement_stable() {
    let a = DiffusionMatrixField::identity(2);
    let b = DriftField::ou(2, 1.0);
    let coarse = solve_grid(&a, &b, &grid(2, 64)).unwrap();
    let fine = solve_grid(&a, &b, &grid(2, 128)).unwrap();
    let (n1, n2) = (
        weighted_lp_norm(&coarse, 1.0, 2.0).unwrap(),
        weighted_lp_norm(&fine, 1.0, 2.0).unwrap(),
    );
    assert!(((n1 - n2) / n2).abs() < 0.02);
    // ∫(1+|x|)² ρ² for the product Gaussian, by a fine tensor quadrature.
    let h = 16.0 / 1024.0;
    let mut s = 0.0;
    for i in 0..1024 {
        for j in 0..1024 {
            let x = -8.0 + (i as f64 + 0.5) * h;
            let y = -8.0 + (j as f64 + 0.5) * h;
            let r = (x * x + y * y).sqrt();
            let g = (-(x * x + y * y) / 2.0).exp() / (2.0 * std::f64::consts::PI);
            s += (1.0 + r).powi(2) * g * g;
        }
    }
    let oracle = (s * h * h).sqrt();
    assert!(((n2 - oracle) / oracle).abs() < 0.01, "{n2} vs {oracle}");
}

#[test]
fn weak_form_residual_is_within_discretization_error() {
    let a = DiffusionMatrixField::identity(1);
    let b = DriftField::ou(1, 1.0);
    let report = weak_form_check_grid(&a, &b, &grid(1, 256), 20, 3, &SolveOptions::default()).unwrap();
    assert_eq!(report.entries.len(), 20);
    assert!(report.passed, "{report:?}");
}

#[test]
fn weak_form_check_needs_refinements() {
    let a = DiffusionMatrixField::identity(1);
    let b = DriftField::ou(1, 1.0);
    let rho = solve_grid(&a, &b, &grid(1, 64)).unwrap();
    assert!(weak_form_check(&a, &b, std::slice::from_ref(&rho), &[], 10.0).is_err());
    assert!(matches!(
        weak_form_check(&a, &b, &[rho.clone(), rho], &[], 10.0),
        Err(Error::Shape(_))
    ));
}

#[test]
fn moments_are_uniform_over_a_drift_family() {
    let a = DiffusionMatrixField::identity(1);
    let g = grid(1, 512);
    let fine = g.refined();
    let mut worst: f64 = 0.0;
    for v in [0.0, 0.25, 0.5] {
        let bounds = DriftBounds {
            beta: 1.0,
            beta1: 1.0,
            beta2: 0.5,
            beta3: 1.5,
        };
        let b = DriftField::new(
            1,
            vec![ScalarField::from_fn(1, Smoothness::Smooth, move |x| {
                -x[0] + v * x[0].tanh()
            })],
            bounds,
        )
        .unwrap();
        let m = moment(&solve_grid(&a, &b, &g).unwrap(), 4.0);
        let mf = moment(&solve_grid(&a, &b, &fine).unwrap(), 4.0);
        assert!(((m - mf) / mf).abs() < 1e-3);
        worst = worst.max(m);
    }
    assert!(worst.is_finite() && worst < 20.0);
}

#[test]
fn solution_is_positive_on_balls() {
    let a = make_example_field("weierstrass-holder", &BTreeMap::new())
        .unwrap()
        .into_scalar()
        .unwrap();
    let a = DiffusionMatrixField::scalar(a, 0.5).unwrap();
    let rho = solve_grid(&a, &DriftField::ou(1, 1.0), &grid(1, 512)).unwrap();
    assert!(harnack_ratio(&rho, 2.0).unwrap() >= 1.0);
    assert_eq!(rho.diagnostics.method, "grid");
}

#[test]
fn weak_confinement_is_reported_as_under_truncation() {
    let g = GridSpec::new(1, 4.0, 128).unwrap();
    let err = solve_grid(&DiffusionMatrixField::identity(1), &DriftField::ou(1, 0.1), &g);
    assert!(matches!(err, Err(Error::UnderTruncation { .. })), "{err:?}");
    let ok = solve_grid_with(
        &DiffusionMatrixField::identity(1),
        &DriftField::ou(1, 0.1),
        &g,
        &SolveOptions {
            bounded_domain: true,
            ..Default::default()
        },
    );
    assert!(ok.is_ok());
}

#[test]
fn grid_spec_validation() {
    assert!(GridSpec::new(1, 8.0, 24).is_err());
    assert!(GridSpec::new(1, 8.0, 8).is_err());
    assert!(GridSpec::new(1, 3.0, 64).is_err());
    assert!(GridSpec::new(3, 8.0, 64).is_err());
    assert_eq!(GridSpec::default_radius(1.0), 8.0);
    assert_eq!(GridSpec::default_radius(16.0), 4.0);
}
