//! Sampled verification of Condition (H).
//!
//! Points are visited in a fixed order: the integer-radius shells first (|x| = 1, 2, …
//! inside the box), then a lattice of spacing [`LATTICE_SPACING`] anchored at the
//! origin. Enlarging the box only appends points, so a violation found in a small box
//! is found again in any larger one.

use serde::Serialize;

use super::field::{norm, DiffusionMatrixField, DriftField};
use super::modulus::{
    dini_integral, dini_mean_oscillation, log_radii, BoundedBox, DiniEstimate, OscillationModulus, SamplingSpec,
};
use crate::error::{invalid, Error, Result};

pub const LATTICE_SPACING: f64 = 0.125;
/// Absolute slack of every sampled inequality.
pub const SAMPLE_TOL: f64 = 1e-6;
/// Angles per shell in d = 2.
const SHELL_ANGLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseVerdict {
    pub clause: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryModulus {
    pub i: usize,
    pub j: usize,
    pub modulus: OscillationModulus,
    pub dini: DiniEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionHParams {
    pub lambda: f64,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Largest β₂ compatible with the declared β₁ on the samples.
    pub beta2_admissible: f64,
    /// Smallest β₃ compatible with the declared β on the samples.
    pub beta3_admissible: f64,
    /// Extreme eigenvalues of A seen on the samples.
    pub eig_min: f64,
    pub eig_max: f64,
    pub moduli: Vec<EntryModulus>,
    pub clauses: Vec<ClauseVerdict>,
    pub points_checked: usize,
    pub region: BoundedBox,
}

impl ConditionHParams {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }
}

/// Sample points of the box in visiting order.
pub fn condition_points(region: &BoundedBox) -> Vec<[f64; 2]> {
    let d = region.dim;
    let mut pts = Vec::new();
    let reach = (0..d)
        .map(|i| region.lo[i].abs().max(region.hi[i].abs()))
        .fold(0.0, f64::max);
    let mut r = 1.0;
    while r <= reach * std::f64::consts::SQRT_2 + 1.0 {
        if d == 1 {
            for x in [r, -r] {
                if region.contains(&[x]) {
                    pts.push([x, 0.0]);
                }
            }
        } else {
            for j in 0..SHELL_ANGLES {
                let th = j as f64 * std::f64::consts::TAU / SHELL_ANGLES as f64;
                let x = [r * th.cos(), r * th.sin()];
                if region.contains(&x) {
                    pts.push(x);
                }
            }
        }
        r += 1.0;
    }
    let range = |axis: usize| {
        let lo = (region.lo[axis] / LATTICE_SPACING).ceil() as i64;
        let hi = (region.hi[axis] / LATTICE_SPACING).floor() as i64;
        lo..=hi
    };
    if d == 1 {
        for i in range(0) {
            pts.push([i as f64 * LATTICE_SPACING, 0.0]);
        }
    } else {
        for j in range(1) {
            for i in range(0) {
                pts.push([i as f64 * LATTICE_SPACING, j as f64 * LATTICE_SPACING]);
            }
        }
    }
    pts
}

/// Default radii for the entry moduli.
pub fn default_modulus_radii() -> Vec<f64> {
    log_radii(1e-4, 0.5, 16)
}

/// Checks (H_a) and (H_b) on the sampled points of `region` and attaches ω for
/// every a^{ij}, estimated per `sampling`. The Dini clause requires a finite
/// integral verdict for each entry.
pub fn check_condition_h(
    a: &DiffusionMatrixField,
    b: &DriftField,
    region: &BoundedBox,
    sampling: &SamplingSpec,
) -> Result<ConditionHParams> {
    let d = a.dim();
    if b.dim() != d || region.dim != d || sampling.region.dim != d {
        return invalid("diffusion, drift, box and sampling must share the dimension");
    }
    region.validate()?;
    let lambda = a.lambda();
    let bounds = b.bounds();
    let violation = |clause: &str, x: &[f64; 2], detail: String| Error::ConditionViolated {
        clause: clause.to_string(),
        witness: x[..d].to_vec(),
        detail,
    };

    let points = condition_points(region);
    let mut eig_min = f64::INFINITY;
    let mut eig_max = f64::NEG_INFINITY;
    let mut beta2_adm = f64::INFINITY;
    let mut beta3_adm: f64 = 0.0;
    for x in &points {
        let xs = &x[..d];
        let m = a.at(xs);
        let (lo, hi) = m.eigenvalues(d);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite {
                point: xs.to_vec(),
                value: if lo.is_finite() { hi } else { lo },
            });
        }
        eig_min = eig_min.min(lo);
        eig_max = eig_max.max(hi);
        if lo < lambda - SAMPLE_TOL || hi > 1.0 / lambda + SAMPLE_TOL {
            return Err(violation(
                "H_a",
                x,
                format!("eigenvalues [{lo}, {hi}] outside [{lambda}, {}]", 1.0 / lambda),
            ));
        }
        let bx = b.at(xs);
        let bv = &bx[..d];
        if bv.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: xs.to_vec(),
                value: bv.iter().copied().find(|v| !v.is_finite()).unwrap(),
            });
        }
        let r = norm(xs);
        let inner: f64 = bv.iter().zip(xs).map(|(p, q)| p * q).sum();
        if inner > bounds.beta1 - bounds.beta2 * r * r + SAMPLE_TOL {
            return Err(violation(
                "H_b confinement",
                x,
                format!(
                    "<b,x> = {inner} > beta1 - beta2 |x|^2 = {}",
                    bounds.beta1 - bounds.beta2 * r * r
                ),
            ));
        }
        let growth = norm(bv) / (1.0 + r).powf(bounds.beta);
        if growth > bounds.beta3 + SAMPLE_TOL {
            return Err(violation(
                "H_b growth",
                x,
                format!("|b|/(1+|x|)^beta = {growth} > beta3 = {}", bounds.beta3),
            ));
        }
        beta3_adm = beta3_adm.max(growth);
        if r > 0.0 {
            beta2_adm = beta2_adm.min((bounds.beta1 - inner) / (r * r));
        }
    }

    let mut moduli = Vec::new();
    let radii = default_modulus_radii();
    for (entry, (i, j)) in a.entries().iter().zip(a.index_pairs()) {
        let modulus = dini_mean_oscillation(entry, &radii, sampling)?;
        let dini = dini_integral(&modulus)?;
        if !dini.finite {
            return Err(violation(
                "H_a dini",
                &modulus.argmax_center[0],
                format!("a^{}{} has a divergent Dini integral", i + 1, j + 1),
            ));
        }
        moduli.push(EntryModulus { i, j, modulus, dini });
    }

    let clauses = vec![
        ClauseVerdict {
            clause: "H_a",
            passed: true,
            detail: format!("eigenvalues in [{eig_min}, {eig_max}]"),
        },
        ClauseVerdict {
            clause: "H_a dini",
            passed: true,
            detail: format!("{} entries with finite Dini integral", moduli.len()),
        },
        ClauseVerdict {
            clause: "H_b confinement",
            passed: true,
            detail: format!("largest admissible beta2 {beta2_adm}"),
        },
        ClauseVerdict {
            clause: "H_b growth",
            passed: true,
            detail: format!("smallest admissible beta3 {beta3_adm}"),
        },
    ];
    Ok(ConditionHParams {
        lambda,
        beta: bounds.beta,
        beta1: bounds.beta1,
        beta2: bounds.beta2,
        beta3: bounds.beta3,
        beta2_admissible: beta2_adm,
        beta3_admissible: beta3_adm,
        eig_min,
        eig_max,
        moduli,
        clauses,
        points_checked: points.len(),
        region: *region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::field::{DriftBounds, ScalarField, Smoothness};

    fn sampling(d: usize) -> SamplingSpec {
        SamplingSpec::new(BoundedBox::symmetric(d, 1.0), 4, 8, 3)
    }

    #[test]
    fn identity_ou_passes() {
        for d in 1..=2 {
            let a = DiffusionMatrixField::identity(d);
            let b = DriftField::ou(d, 1.0);
            let p = check_condition_h(&a, &b, &BoundedBox::symmetric(d, 4.0), &sampling(d)).unwrap();
            assert!(p.passed());
            assert_eq!(p.lambda, 1.0);
            assert!((p.beta2_admissible - 1.0).abs() < 1e-9 || p.beta2_admissible >= 1.0);
        }
    }

    #[test]
    fn expanding_drift_fails_at_unit_radius() {
        let comp = ScalarField::from_fn(1, Smoothness::Smooth, |x| x[0]);
        let bounds = DriftBounds {
            beta: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            beta3: 1.0,
        };
        let b = DriftField::new(1, vec![comp], bounds).unwrap();
        let a = DiffusionMatrixField::identity(1);
        match check_condition_h(&a, &b, &BoundedBox::symmetric(1, 4.0), &sampling(1)) {
            Err(Error::ConditionViolated { clause, witness, .. }) => {
                assert_eq!(clause, "H_b confinement");
                assert!((witness[0].abs() - 1.0).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lattice_is_nested() {
        let small = condition_points(&BoundedBox::symmetric(2, 2.0));
        let large = condition_points(&BoundedBox::symmetric(2, 3.0));
        for p in &small {
            assert!(large.contains(p));
        }
    }
}
