//! Constants (M₀, R₀) with L_{A,b}(|x|^{2k}) ≤ −M₀(1+|x|^{2k}) for |x| > R₀.

use serde::Serialize;

use crate::coeffs::{BoundedBox, DiffusionMatrixField, DriftBounds, DriftField};
use crate::error::{invalid, Error, Result};

/// Spacing of the radius grid (anchored at 0).
pub const RADIUS_STEP: f64 = 1.0 / 64.0;
const SHELL_ANGLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessSource {
    /// Evaluated from A and b on sampled shells.
    Sampled,
    /// Bounded through (d, k, λ, β₁, β₂) only.
    Parameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovWitness {
    pub k: f64,
    pub m0: f64,
    pub r0: f64,
    /// Target rate min(1, kβ₂) used to locate R₀.
    pub target: f64,
    pub source: WitnessSource,
    /// V(x) = 1 + |x|^{2k}.
    pub lyapunov: &'static str,
}

/// L_{A,b}(|x|^{2k}) at x.
pub fn lyapunov_generator(a: &DiffusionMatrixField, b: &DriftField, k: f64, x: &[f64]) -> f64 {
    let d = a.dim();
    let r2: f64 = x[..d].iter().map(|t| t * t).sum();
    if r2 == 0.0 {
        // |x|^{2k} is C² at 0 only for k ≥ 1; its second derivative there is 2·A for k = 1.
        return if k == 1.0 { 2.0 * a.at(x).trace(d) } else { 0.0 };
    }
    let m = a.at(x);
    let bv = b.at(x);
    let inner: f64 = bv[..d].iter().zip(&x[..d]).map(|(p, q)| p * q).sum();
    let rk = r2.powf(k - 1.0);
    2.0 * k * rk * m.trace(d) + 2.0 * k * (2.0 * k - 2.0) * rk / r2 * m.quad_form(d, x) + 2.0 * k * rk * inner
}

fn target_rate(k: f64, beta2: f64) -> f64 {
    1.0f64.min(k * beta2)
}

fn shell_max(a: &DiffusionMatrixField, b: &DriftField, k: f64, r: f64) -> f64 {
    let d = a.dim();
    if d == 1 {
        lyapunov_generator(a, b, k, &[r]).max(lyapunov_generator(a, b, k, &[-r]))
    } else {
        (0..SHELL_ANGLES)
            .map(|j| {
                let th = j as f64 * std::f64::consts::TAU / SHELL_ANGLES as f64;
                lyapunov_generator(a, b, k, &[r * th.cos(), r * th.sin()])
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) > 0 ≥ f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
    }
    hi
}

/// Smallest R₀ on the shells inside `region` beyond which the sampled
/// generator stays below −M(1+|x|^{2k}), M = min(1, kβ₂), refined by bisection;
/// M₀ is then the largest rate admitted on [R₀, box radius].
pub fn lyapunov_constants(
    a: &DiffusionMatrixField,
    b: &DriftField,
    k: f64,
    region: &BoundedBox,
) -> Result<LyapunovWitness> {
    let d = a.dim();
    if b.dim() != d || region.dim != d {
        return invalid("diffusion, drift and box must share the dimension");
    }
    if !(k >= 1.0) {
        return invalid(format!("weight order k = {k} must be >= 1"));
    }
    region.validate()?;
    let reach = (0..d)
        .map(|i| region.lo[i].abs().min(region.hi[i].abs()))
        .fold(f64::INFINITY, f64::min);
    let target = target_rate(k, b.bounds().beta2);
    let excess = |r: f64| shell_max(a, b, k, r) + target * (1.0 + r.powf(2.0 * k));
    let steps = (reach / RADIUS_STEP).floor() as usize;
    if steps < 2 {
        return invalid("box too small for the radius grid");
    }
    let radii: Vec<f64> = (0..=steps).map(|j| j as f64 * RADIUS_STEP).collect();
    let values: Vec<f64> = radii.iter().map(|&r| excess(r)).collect();
    let last_bad = values.iter().rposition(|&v| v > 0.0);
    let r0 = match last_bad {
        None => 0.0,
        Some(j) if j == steps => {
            return Err(Error::Confinement(format!(
                "L(|x|^{{2k}}) > -{target}(1+|x|^{{2k}}) at |x| = {}; no admissible R0 inside the box",
                radii[j]
            )))
        }
        Some(j) => bisect(radii[j], radii[j + 1], excess),
    };
    let rate = |r: f64| -shell_max(a, b, k, r) / (1.0 + r.powf(2.0 * k));
    let m0 = std::iter::once(r0)
        .chain(radii.iter().copied().filter(|&r| r > r0))
        .map(rate)
        .fold(f64::INFINITY, f64::min);
    Ok(LyapunovWitness {
        k,
        m0,
        r0,
        target,
        source: WitnessSource::Sampled,
        lyapunov: "1+|x|^{2k}",
    })
}

/// Witness from the bounds tr A ≤ dλ⁻¹, xᵀAx ≤ λ⁻¹|x|², ⟨b,x⟩ ≤ β₁ − β₂|x|².
pub fn lyapunov_constants_from_params(d: usize, k: f64, lambda: f64, bounds: &DriftBounds) -> Result<LyapunovWitness> {
    if !(k >= 1.0) {
        return invalid(format!("weight order k = {k} must be >= 1"));
    }
    bounds.validate()?;
    let df = d as f64;
    let upper = |r: f64| {
        let rk = r.powf(2.0 * k - 2.0);
        2.0 * k * rk * (df / lambda + (2.0 * k - 2.0) / lambda + bounds.beta1 - bounds.beta2 * r * r)
    };
    let target = target_rate(k, bounds.beta2);
    let excess = |r: f64| upper(r) + target * (1.0 + r.powf(2.0 * k));
    // excess(r)/r^{2k-2} is decreasing, so there is a single crossing.
    let r0 = if excess(0.0) <= 0.0 {
        0.0
    } else {
        let mut hi = 1.0;
        while excess(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e8 {
                return Err(Error::Confinement("parameter bound never becomes dissipative".into()));
            }
        }
        bisect(0.0, hi, excess)
    };
    let rate = |r: f64| -upper(r) / (1.0 + r.powf(2.0 * k));
    let span = 4.0 * r0.max(1.0);
    let m0 = (0..=4000)
        .map(|j| r0 + span * j as f64 / 4000.0)
        .map(rate)
        .fold(2.0 * k * bounds.beta2, f64::min);
    Ok(LyapunovWitness {
        k,
        m0,
        r0,
        target,
        source: WitnessSource::Parameters,
        lyapunov: "1+|x|^{2k}",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{ScalarField, Smoothness};

    #[test]
    fn ou_quadratic_witness() {
        let w = lyapunov_constants(
            &DiffusionMatrixField::identity(1),
            &DriftField::ou(1, 1.0),
            1.0,
            &BoundedBox::symmetric(1, 8.0),
        )
        .unwrap();
        assert!((w.r0 - 3f64.sqrt()).abs() < 1e-10, "{}", w.r0);
        assert!((w.m0 - 1.0).abs() < 1e-9, "{}", w.m0);
    }

    #[test]
    fn expanding_drift_has_no_witness() {
        let bounds = DriftBounds {
            beta: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            beta3: 1.0,
        };
        let b = DriftField::new(1, vec![ScalarField::from_fn(1, Smoothness::Smooth, |x| x[0])], bounds).unwrap();
        let err = lyapunov_constants(
            &DiffusionMatrixField::identity(1),
            &b,
            1.0,
            &BoundedBox::symmetric(1, 8.0),
        );
        assert!(matches!(err, Err(Error::Confinement(_))));
    }

    #[test]
    fn generator_matches_finite_differences() {
        let a = DiffusionMatrixField::identity(2);
        let b = DriftField::ou(2, 1.0);
        let k = 2.0;
        let x = [0.7, -1.3];
        let v = |y: &[f64]| (y[0] * y[0] + y[1] * y[1]).powf(k);
        let h = 1e-4;
        let mut lap = 0.0;
        let mut drift = 0.0;
        for i in 0..2 {
            let mut p = x;
            let mut m = x;
            p[i] += h;
            m[i] -= h;
            lap += (v(&p) - 2.0 * v(&x) + v(&m)) / (h * h);
            drift += -x[i] * (v(&p) - v(&m)) / (2.0 * h);
        }
        let got = lyapunov_generator(&a, &b, k, &x);
        assert!((got - (lap + drift)).abs() < 1e-5, "{got} vs {}", lap + drift);
    }
}
