use approx::assert_relative_eq;
use proptest::prelude::*;

use fpk_core::coeffs::*;
use fpk_core::fpk::*;
use fpk_core::sparse::{bicgstab, CsrMatrix, Ilu0};
use fpk_core::stability::weighted_l1_distance;

fn grid(n: usize) -> GridSpec {
    GridSpec::new(1, 8.0, n).unwrap()
}

fn density(values: Vec<f64>) -> GridDensity {
    GridDensity::from_values(grid(values.len()), values).unwrap()
}

fn positive_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_is_a_metric(a in positive_vec(32), b in positive_vec(32), c in positive_vec(32), k in 1.0f64..4.0) {
        let (p, q, r) = (density(a), density(b), density(c));
        let pq = weighted_l1_distance(&p, &q, k).unwrap();
        let qr = weighted_l1_distance(&q, &r, k).unwrap();
        let pr = weighted_l1_distance(&p, &r, k).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert_eq!(weighted_l1_distance(&p, &p, k).unwrap(), 0.0);
        prop_assert_eq!(pq, weighted_l1_distance(&q, &p, k).unwrap());
        prop_assert!(pr <= pq + qr + 1e-12);
    }

    #[test]
    fn densities_have_unit_mass(a in positive_vec(64)) {
        let p = density(a);
        assert_relative_eq!(p.mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(moment(&p, 0.0), 1.0, epsilon = 1e-12);
        prop_assert!(harnack_ratio(&p, 4.0).unwrap() >= 1.0);
    }

    #[test]
    fn weighted_norm_is_monotone_in_k(a in positive_vec(64), k in 0.0f64..3.0, dk in 0.0f64..2.0, p in 1.1f64..5.0) {
        let rho = density(a);
        let lo = weighted_lp_norm(&rho, k, p).unwrap();
        let hi = weighted_lp_norm(&rho, k + dk, p).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn linear_field_oscillation(c in -5.0f64..5.0, r in 1e-4f64..1.0, seed in 0u64..1000) {
        let f = ScalarField::from_fn(1, Smoothness::Smooth, move |x| c * x[0]);
        let s = SamplingSpec::new(BoundedBox::symmetric(1, 2.0), 3, 32, seed);
        let w = dini_mean_oscillation(&f, &[r], &s).unwrap();
        assert_relative_eq!(w.omega[0], c.abs() * r / 2.0, epsilon = 1e-12, max_relative = 1e-9);
    }

    #[test]
    fn mollification_preserves_affine_fields(c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, eps in 1e-3f64..0.5, x in -5.0f64..5.0) {
        let f = ScalarField::from_fn(1, Smoothness::Smooth, move |y| c0 + c1 * y[0]);
        let g = mollify(&f, &MollifierSpec::new(1, eps).unwrap()).unwrap();
        assert_relative_eq!(g.eval(&[x]), c0 + c1 * x, epsilon = 1e-11);
    }

    #[test]
    fn scheme_conserves_mass(theta in 0.3f64..3.0, a in 0.5f64..2.0, d in 1usize..=2) {
        let g = GridSpec::new(d, 8.0, 16).unwrap();
        let diff = DiffusionMatrixField::scalar(ScalarField::constant(d, a), a.min(1.0 / a)).unwrap();
        let m = fpk_operator(&diff, &DriftField::ou(d, theta), &g).unwrap();
        let ones = vec![1.0; g.len()];
        let mut col_sums = vec![0.0; g.len()];
        m.transpose().matvec(&ones, &mut col_sums);
        for s in col_sums {
            prop_assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn grid_solutions_are_positive_probability_densities(theta in 0.5f64..2.0, a in 0.5f64..2.0) {
        let diff = DiffusionMatrixField::scalar(ScalarField::constant(1, a), a.min(1.0 / a)).unwrap();
        let rho = solve_grid(&diff, &DriftField::ou(1, theta), &grid(128)).unwrap();
        assert_relative_eq!(rho.mass(), 1.0, epsilon = 1e-12);
        prop_assert!(rho.values().iter().all(|v| *v >= 0.0));
        prop_assert!(harnack_ratio(&rho, 2.0).is_ok());
        prop_assert!(rho.boundary_mass() < BOUNDARY_MASS_LIMIT);
    }

    #[test]
    fn condition_h_failures_persist_on_larger_boxes(c in -3.0f64..3.0, half in 4.0f64..8.0) {
        let bounds = DriftBounds { beta: 1.0, beta1: 1.0, beta2: 1.0, beta3: 4.0 };
        let b = DriftField::new(
            1,
            vec![ScalarField::from_fn(1, Smoothness::Smooth, move |x| -2.0 * x[0] + c)],
            bounds,
        )
        .unwrap();
        let a = DiffusionMatrixField::identity(1);
        let s = SamplingSpec::new(BoundedBox::symmetric(1, 1.0), 2, 16, 0);
        let small = check_condition_h(&a, &b, &BoundedBox::symmetric(1, half), &s);
        let large = check_condition_h(&a, &b, &BoundedBox::symmetric(1, 2.0 * half), &s);
        if small.is_err() {
            prop_assert!(large.is_err());
        }
    }

    #[test]
    fn bicgstab_solves_dominant_systems(diag in prop::collection::vec(3.0f64..6.0, 20), rhs in prop::collection::vec(-1.0f64..1.0, 20)) {
        let n = diag.len();
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, diag[i]));
            if i > 0 {
                trip.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                trip.push((i, i + 1, -1.3));
            }
        }
        let m = CsrMatrix::from_triplets(n, trip);
        let ilu = Ilu0::new(&m).unwrap();
        let mut x = vec![0.0; n];
        bicgstab(&m, &rhs, &mut x, &ilu, 1e-12, 500).unwrap();
        let mut y = vec![0.0; n];
        m.matvec(&x, &mut y);
        for (u, v) in y.iter().zip(&rhs) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}
