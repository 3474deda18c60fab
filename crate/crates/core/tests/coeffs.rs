use std::collections::BTreeMap;

use fpk_core::coeffs::*;
use fpk_core::Error;

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn sampling_1d(half_width: f64, centers: usize, seed: u64) -> SamplingSpec {
    SamplingSpec::new(BoundedBox::symmetric(1, half_width), centers, 64, seed)
}

#[test]
fn constant_field_has_zero_oscillation() {
    let f = ScalarField::constant(2, 5.0);
    let s = SamplingSpec::new(BoundedBox::symmetric(2, 1.0), 8, 8, 1);
    let w = dini_mean_oscillation(&f, &[0.01, 0.1, 0.5], &s).unwrap();
    assert!(w.omega.iter().all(|v| *v == 0.0));
}

#[test]
fn linear_field_oscillation_is_half_radius_times_slope() {
    // Mean of |y − x| over [x − r, x + r] is r/2.
    for c in [1.0, -3.0, 0.25] {
        let f = ScalarField::from_fn(1, Smoothness::Smooth, move |x| c * x[0]);
        let radii = [0.001, 0.01, 0.1, 0.5];
        let w = dini_mean_oscillation(&f, &radii, &sampling_1d(2.0, 5, 9)).unwrap();
        for (r, om) in radii.iter().zip(&w.omega) {
            let expected = c.abs() * r / 2.0;
            assert!(
                (om - expected).abs() <= 1e-9 * expected.max(1.0),
                "r={r}: {om} vs {expected}"
            );
        }
    }
}

#[test]
fn log_modulus_oscillation_decays_like_log_power() {
    let f = make_example_field("log-modulus", &params(&[("gamma", 0.5)]))
        .unwrap()
        .into_scalar()
        .unwrap();
    let radii = log_radii(1e-6, 1e-2, 9);
    let w = dini_mean_oscillation(&f, &radii, &sampling_1d(0.25, 16, 4)).unwrap();
    let scaled: Vec<f64> = radii
        .iter()
        .zip(&w.omega)
        .map(|(r, om)| om * r.ln().abs().powf(1.5))
        .collect();
    let (lo, hi) = scaled
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(lo > 0.0);
    assert!(hi / lo < 3.0, "ω|ln r|^1.5 not bounded: {scaled:?}");
    let est = dini_integral(&w.with_t0(1e-2)).unwrap();
    assert!(est.finite);
}

#[test]
fn dini_integral_of_identity_modulus() {
    let w = OscillationModulus::from_curve(log_radii(1e-4, 1.0, 200), 1.0, |t| t);
    let est = dini_integral(&w).unwrap();
    assert!(est.finite);
    assert!((est.value - 1.0).abs() < 1e-3, "{}", est.value);
}

#[test]
fn dini_integral_of_inverse_log_diverges() {
    let w = OscillationModulus::from_curve(log_radii(1e-8, 0.5, 30), 0.5, |t| 1.0 / t.ln().abs());
    let est = dini_integral(&w).unwrap();
    assert!(!est.finite);
    assert!(est.value.is_infinite());
}

#[test]
fn dini_integral_of_log_power_three_halves() {
    // ∫₀^{t0} |ln t|^{-3/2}/t dt = 2|ln t0|^{-1/2}.
    let t0: f64 = 0.5;
    let w = OscillationModulus::from_curve(log_radii(1e-8, t0, 400), t0, |t| t.ln().abs().powf(-1.5));
    let est = dini_integral(&w).unwrap();
    let exact = 2.0 * t0.ln().abs().powf(-0.5);
    assert!(est.finite);
    assert!((est.value - exact).abs() < 0.02 * exact, "{} vs {exact}", est.value);
}

#[test]
fn dini_integral_needs_small_radii() {
    let w = OscillationModulus::from_curve(vec![0.2, 0.3, 0.4, 0.6, 0.8], 0.5, |t| t);
    assert!(matches!(dini_integral(&w), Err(Error::InsufficientResolution(_))));
}

#[test]
fn mollifier_is_a_probability_kernel() {
    for d in 1..=2 {
        let m = MollifierSpec::new(d, 0.1).unwrap();
        assert!(m.normalization_error() < 1e-8);
        let (nodes, weights) = m.nodes();
        assert!(weights.iter().all(|w| *w >= 0.0));
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for z in &nodes {
            assert!(z[..d].iter().map(|t| t * t).sum::<f64>().sqrt() <= 0.1);
        }
    }
}

#[test]
fn mollified_constant_and_linear_fields_are_unchanged() {
    let m = MollifierSpec::new(2, 0.05).unwrap();
    let c = mollify(&ScalarField::constant(2, 3.5), &m).unwrap();
    let lin = mollify(&ScalarField::from_fn(2, Smoothness::Smooth, |x| 2.0 * x[0] - x[1]), &m).unwrap();
    for x in [[0.0, 0.0], [0.3, -1.2], [2.0, 0.7]] {
        assert!((c.eval(&x) - 3.5).abs() < 1e-13);
        assert!((lin.eval(&x) - (2.0 * x[0] - x[1])).abs() < 1e-12);
    }
    assert_eq!(lin.smoothness(), Smoothness::Smooth);
}

#[test]
fn mollified_weierstrass_converges_uniformly() {
    let f = make_example_field("weierstrass-holder", &params(&[("alpha", 0.5)]))
        .unwrap()
        .into_scalar()
        .unwrap();
    let region = BoundedBox::symmetric(1, 1.0);
    let gaps: Vec<f64> = [0.1, 0.01, 0.001]
        .iter()
        .map(|&eps| {
            sup_gap(
                &f,
                &mollify(&f, &MollifierSpec::new(1, eps).unwrap()).unwrap(),
                &region,
                4001,
            )
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn weierstrass_field_has_its_holder_slope() {
    let alpha = 0.5;
    let f = make_example_field("weierstrass-holder", &params(&[("alpha", alpha)]))
        .unwrap()
        .into_scalar()
        .unwrap();
    assert_eq!(f.smoothness(), Smoothness::Holder(alpha));
    let radii = log_radii(1e-4, 1e-2, 9);
    let w = dini_mean_oscillation(&f, &radii, &sampling_1d(1.0, 24, 11)).unwrap();
    let slope = w.loglog_slope(1e-2).unwrap();
    assert!((slope - alpha).abs() <= 0.1, "slope {slope}");
}

#[test]
fn weierstrass_stays_within_ellipticity_bounds() {
    let lambda = 0.5;
    let f = make_example_field("weierstrass-holder", &params(&[("lambda", lambda)]))
        .unwrap()
        .into_scalar()
        .unwrap();
    for i in 0..2000 {
        let x = -4.0 + 8.0 * i as f64 / 1999.0;
        let v = f.eval(&[x]);
        assert!(v >= lambda - 1e-12 && v <= 1.0 / lambda + 1e-12);
    }
}

#[test]
fn example_library_values() {
    let one = make_example_field("constant", &params(&[("c", 1.0)]))
        .unwrap()
        .into_scalar()
        .unwrap();
    assert_eq!(one.eval(&[0.3]), 1.0);
    let lm = make_example_field("log-modulus", &params(&[("gamma", 0.5)]))
        .unwrap()
        .into_scalar()
        .unwrap();
    let expected = 0.5f64.ln().abs().powf(-0.5);
    assert!((lm.eval(&[0.5]) - expected).abs() < 1e-15);
    let ou = make_example_field("ou-drift", &BTreeMap::new())
        .unwrap()
        .into_drift()
        .unwrap();
    assert_eq!(ou.at(&[2.0])[0], -2.0);
    match make_example_field("weierstrass", &BTreeMap::new()) {
        Err(Error::UnknownField { supported, .. }) => {
            assert!(supported.contains("weierstrass-holder"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn condition_h_verdicts() {
    let region = BoundedBox::symmetric(2, 4.0);
    let sampling = SamplingSpec::new(BoundedBox::symmetric(2, 1.0), 4, 8, 2);
    let ou = check_condition_h(
        &DiffusionMatrixField::identity(2),
        &DriftField::ou(2, 1.0),
        &region,
        &sampling,
    )
    .unwrap();
    assert!(ou.passed());
    assert_eq!((ou.lambda, ou.beta, ou.beta2), (1.0, 1.0, 1.0));

    let cubic = make_example_field("polynomial-confining-drift", &params(&[("d", 2.0), ("beta", 3.0)]))
        .unwrap()
        .into_drift()
        .unwrap();
    let p = check_condition_h(&DiffusionMatrixField::identity(2), &cubic, &region, &sampling).unwrap();
    assert!(p.passed());
    assert_eq!(p.beta, 3.0);
}

#[test]
fn condition_h_failure_persists_on_larger_boxes() {
    let bounds = DriftBounds {
        beta: 1.0,
        beta1: 1.0,
        beta2: 1.0,
        beta3: 1.0,
    };
    let b = DriftField::new(1, vec![ScalarField::from_fn(1, Smoothness::Smooth, |x| x[0])], bounds).unwrap();
    let a = DiffusionMatrixField::identity(1);
    let sampling = sampling_1d(1.0, 4, 1);
    for half in [4.0, 8.0, 16.0] {
        match check_condition_h(&a, &b, &BoundedBox::symmetric(1, half), &sampling) {
            Err(Error::ConditionViolated { clause, witness, .. }) => {
                assert_eq!(clause, "H_b confinement");
                assert_eq!(witness[0].abs(), 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn ellipticity_violation_is_reported() {
    let a = DiffusionMatrixField::new(
        1,
        vec![ScalarField::from_fn(1, Smoothness::Smooth, |x| 1.0 + x[0] * x[0])],
        0.5,
    )
    .unwrap();
    let err = check_condition_h(
        &a,
        &DriftField::ou(1, 1.0),
        &BoundedBox::symmetric(1, 4.0),
        &sampling_1d(1.0, 4, 1),
    );
    assert!(matches!(err, Err(Error::ConditionViolated { clause, .. }) if clause == "H_a"));
}

#[test]
fn mollification_does_not_increase_oscillation() {
    let radii = log_radii(1e-3, 1e-1, 5);
    let sampling = SamplingSpec::new(BoundedBox::symmetric(1, 0.75), 32, 64, 21);
    for f in [
        make_example_field("weierstrass-holder", &BTreeMap::new())
            .unwrap()
            .into_scalar()
            .unwrap(),
        make_example_field("log-modulus", &BTreeMap::new())
            .unwrap()
            .into_scalar()
            .unwrap(),
    ] {
        let w = dini_mean_oscillation(&f, &radii, &sampling).unwrap();
        for eps in [0.1, 0.01] {
            let g = mollify(&f, &MollifierSpec::new(1, eps).unwrap()).unwrap();
            let wg = dini_mean_oscillation(&g, &radii, &sampling).unwrap();
            for j in 0..radii.len() {
                assert!(
                    wg.omega[j] <= w.omega[j] + 2.0 * w.stderr[j],
                    "eps {eps}, r {}: {} > {}",
                    radii[j],
                    wg.omega[j],
                    w.omega[j]
                );
            }
        }
    }
}
