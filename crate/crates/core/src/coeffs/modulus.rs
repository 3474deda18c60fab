//! Mean oscillation moduli and the Dini integral test.
//!
//! ω(r) = sup_x ⨍_{B(x,r)} |f − f_B(x,r)|. The supremum is replaced by a maximum
//! over sampled centers (the box center plus uniformly drawn points), and each
//! ball average uses a midpoint rule: uniform nodes on the interval in d = 1,
//! a radial × angular product grid weighted by the radius in d = 2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::field::ScalarField;
use crate::error::{invalid, Error, Result};
use crate::quadrature::{fit_line, trapezoid};

/// Axis-aligned box [lo, hi] in d ≤ 2 dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundedBox {
    pub dim: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl BoundedBox {
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self {
            dim,
            lo: [-half_width; 2],
            hi: [half_width; 2],
        }
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return invalid(format!("box dimension {} not supported", self.dim));
        }
        for i in 0..self.dim {
            if !(self.lo[i] < self.hi[i]) || !self.lo[i].is_finite() || !self.hi[i].is_finite() {
                return invalid(format!("degenerate box axis {i}: [{}, {}]", self.lo[i], self.hi[i]));
            }
        }
        Ok(())
    }
}

/// How ω(r) is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingSpec {
    /// Number of ball centers, including the box center.
    pub centers: usize,
    /// Midpoint nodes per ball (d = 1), or radial nodes (d = 2, with 4× as many angles).
    pub points_per_ball: usize,
    pub seed: u64,
    pub region: BoundedBox,
}

impl SamplingSpec {
    pub fn new(region: BoundedBox, centers: usize, points_per_ball: usize, seed: u64) -> Self {
        Self {
            centers,
            points_per_ball,
            seed,
            region,
        }
    }

    fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if self.centers == 0 || self.points_per_ball < 2 {
            return invalid("sampling needs at least one center and two points per ball");
        }
        Ok(())
    }

    /// The box center followed by `centers - 1` uniform draws from the box.
    pub fn center_points(&self) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = vec![self.region.center()];
        for _ in 1..self.centers {
            let mut c = [0.0; 2];
            for (i, ci) in c.iter_mut().enumerate().take(self.region.dim) {
                *ci = rng.gen_range(self.region.lo[i]..=self.region.hi[i]);
            }
            out.push(c);
        }
        out
    }

    /// Unit-ball offsets and normalized weights.
    pub fn ball_nodes(&self) -> (Vec<[f64; 2]>, Vec<f64>) {
        ball_nodes(self.region.dim, self.points_per_ball)
    }
}

pub(crate) fn ball_nodes(dim: usize, m: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    if dim == 1 {
        let nodes = (0..m).map(|j| [-1.0 + (2 * j + 1) as f64 / m as f64, 0.0]).collect();
        (nodes, vec![1.0 / m as f64; m])
    } else {
        let angles = 4 * m;
        let mut nodes = Vec::with_capacity(m * angles);
        let mut weights = Vec::with_capacity(m * angles);
        for i in 0..m {
            let rho = (i as f64 + 0.5) / m as f64;
            for j in 0..angles {
                let th = (j as f64 + 0.5) * std::f64::consts::TAU / angles as f64;
                nodes.push([rho * th.cos(), rho * th.sin()]);
                weights.push(rho);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        (nodes, weights)
    }
}

/// Sampled modulus ω(r_j) with its sampling provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationModulus {
    pub radii: Vec<f64>,
    pub omega: Vec<f64>,
    /// Standard error of the inner ball average at the maximizing center.
    pub stderr: Vec<f64>,
    /// Index of the maximizing center for each radius.
    pub argmax_center: Vec<[f64; 2]>,
    pub sampling: Option<SamplingSpec>,
    pub t0: f64,
}

impl OscillationModulus {
    /// Wraps an analytic curve ω(t) sampled at `radii` (zero sampling error).
    pub fn from_curve(radii: Vec<f64>, t0: f64, omega: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = radii.iter().map(|&r| omega(r)).collect();
        let n = radii.len();
        Self {
            radii,
            omega: values,
            stderr: vec![0.0; n],
            argmax_center: vec![[0.0; 2]; n],
            sampling: None,
            t0,
        }
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    /// Log-log slope of ω against r over the samples with r ≤ `upper`.
    pub fn loglog_slope(&self, upper: f64) -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .radii
            .iter()
            .zip(&self.omega)
            .filter(|(r, w)| **r <= upper && **w > 0.0)
            .map(|(r, w)| (r.ln(), w.ln()))
            .unzip();
        fit_line(&xs, &ys).map(|f| f.slope)
    }
}

/// Relative oscillation treated as rounding error.
const ROUNDOFF_OSC: f64 = 1e-13;

/// Estimates ω(r) for each radius. Deterministic given the sampling spec.
pub fn dini_mean_oscillation(f: &ScalarField, radii: &[f64], sampling: &SamplingSpec) -> Result<OscillationModulus> {
    sampling.validate()?;
    let d = sampling.region.dim;
    if f.dim() != d {
        return invalid(format!("field dimension {} != sampling dimension {d}", f.dim()));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return invalid("radii must be positive");
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("radii must be strictly increasing");
    }
    let centers = sampling.center_points();
    let (nodes, weights) = sampling.ball_nodes();

    let per_radius: Vec<Result<(f64, f64, [f64; 2])>> = radii
        .par_iter()
        .map(|&r| {
            let mut best = (f64::NEG_INFINITY, 0.0, [0.0; 2]);
            let mut values = vec![0.0; nodes.len()];
            for c in &centers {
                let mut y = [0.0; 2];
                for (k, z) in nodes.iter().enumerate() {
                    for i in 0..d {
                        y[i] = c[i] + r * z[i];
                    }
                    let v = f.eval(&y[..d]);
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            point: y[..d].to_vec(),
                            value: v,
                        });
                    }
                    values[k] = v;
                }
                let mean: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
                let mut osc: f64 = values.iter().zip(&weights).map(|(v, w)| w * (v - mean).abs()).sum();
                // Rounding noise of a (locally) constant field.
                if osc <= ROUNDOFF_OSC * values.iter().fold(0.0f64, |m, v| m.max(v.abs())) {
                    osc = 0.0;
                }
                if osc > best.0 {
                    let var: f64 = values
                        .iter()
                        .zip(&weights)
                        .map(|(v, w)| {
                            let dev = (v - mean).abs() - osc;
                            w * dev * dev
                        })
                        .sum();
                    best = (osc, (var / values.len() as f64).sqrt(), *c);
                }
            }
            Ok(best)
        })
        .collect();

    let mut omega = Vec::with_capacity(radii.len());
    let mut stderr = Vec::with_capacity(radii.len());
    let mut argmax_center = Vec::with_capacity(radii.len());
    for item in per_radius {
        let (w, se, c) = item?;
        omega.push(w);
        stderr.push(se);
        argmax_center.push(c);
    }
    Ok(OscillationModulus {
        radii: radii.to_vec(),
        omega,
        stderr,
        argmax_center,
        sampling: Some(*sampling),
        t0: *radii.last().unwrap(),
    })
}

/// Model used to extrapolate ω below the smallest sampled radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum TailModel {
    /// ω ≈ 0 on the fit window.
    Vanishing,
    /// ω(t) ≈ C t^alpha.
    Power { alpha: f64 },
    /// ω(t) ≈ C |ln t|^(-gamma).
    LogPower { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiniEstimate {
    pub finite: bool,
    /// Estimate of ∫₀^{t0} ω(t)/t dt (infinite when divergent).
    pub value: f64,
    /// Contribution of the extrapolated part (0, r_min).
    pub tail: f64,
    /// Trapezoidal contribution over the sampled range [r_min, t0].
    pub sampled: f64,
    pub model: TailModel,
    pub fit_rms: f64,
    pub t0: f64,
}

/// Smallest exponent accepted as decay in either tail model.
pub const POWER_DECAY_MIN: f64 = 0.02;
pub const LOG_DECAY_MARGIN: f64 = 0.02;

/// Estimates ∫₀^{t0} ω(t)/t dt from the sampled curve.
///
/// The sampled range is integrated by the trapezoidal rule in ln t. Below the
/// smallest radius the curve is extrapolated from its first decade with
/// whichever of a power law or a log-power law fits better; the verdict is
/// finite iff that extrapolated tail integral converges.
pub fn dini_integral(omega: &OscillationModulus) -> Result<DiniEstimate> {
    let t0 = omega.t0;
    let mut pts: Vec<(f64, f64)> = omega
        .radii
        .iter()
        .zip(&omega.omega)
        .filter(|(r, _)| **r <= t0)
        .map(|(r, w)| (*r, *w))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 4 {
        return Err(Error::InsufficientResolution(format!(
            "{} radii below t0 = {t0}; at least 4 are required",
            pts.len()
        )));
    }
    let r_min = pts[0].0;

    let mut xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    // Carry the curve to t0 if a sample beyond it exists.
    if let Some(i) = omega.radii.iter().position(|&r| r > t0) {
        let (ra, wa) = *pts.last().unwrap();
        let (rb, wb) = (omega.radii[i], omega.omega[i]);
        if ra < t0 {
            let s = (t0.ln() - ra.ln()) / (rb.ln() - ra.ln());
            xs.push(t0.ln());
            ys.push(wa + s * (wb - wa));
        }
    }
    let sampled = trapezoid(&xs, &ys);

    let window: Vec<(f64, f64)> = {
        let w: Vec<_> = pts.iter().copied().filter(|p| p.0 <= 10.0 * r_min).collect();
        if w.len() >= 4 {
            w
        } else {
            pts[..4].to_vec()
        }
    };

    let positive: Vec<(f64, f64)> = window.iter().copied().filter(|p| p.1 > 1e-300).collect();
    if positive.len() < window.len() {
        // Sampled oscillation vanishes near zero.
        let finite = positive.is_empty() || window[0].1 <= 1e-300;
        let value = if finite { sampled } else { f64::INFINITY };
        return Ok(DiniEstimate {
            finite,
            value,
            tail: 0.0,
            sampled,
            model: TailModel::Vanishing,
            fit_rms: 0.0,
            t0,
        });
    }

    let ln_r: Vec<f64> = window.iter().map(|p| p.0.ln()).collect();
    let ln_w: Vec<f64> = window.iter().map(|p| p.1.ln()).collect();
    let power = fit_line(&ln_r, &ln_w);
    let log_power = if window.iter().all(|p| p.0 < 1.0) {
        let ln_s: Vec<f64> = window.iter().map(|p| (-p.0.ln()).ln()).collect();
        fit_line(&ln_s, &ln_w)
    } else {
        None
    };

    let s_min = -r_min.ln();
    let use_log = match (power, log_power) {
        (Some(p), Some(l)) => l.rms_residual < p.rms_residual,
        (None, Some(_)) => true,
        _ => false,
    };
    let (finite, tail, model, fit_rms) = if use_log {
        let l = log_power.unwrap();
        let gamma = -l.slope;
        let fitted = (l.intercept + l.slope * s_min.ln()).exp();
        let finite = gamma > 1.0 + LOG_DECAY_MARGIN;
        let tail = if finite {
            fitted * s_min / (gamma - 1.0)
        } else {
            f64::INFINITY
        };
        (finite, tail, TailModel::LogPower { gamma }, l.rms_residual)
    } else {
        let p = power.ok_or_else(|| Error::InsufficientResolution("cannot fit the small-radius samples".into()))?;
        let alpha = p.slope;
        let fitted = (p.intercept + alpha * r_min.ln()).exp();
        let finite = alpha > POWER_DECAY_MIN;
        let tail = if finite { fitted / alpha } else { f64::INFINITY };
        (finite, tail, TailModel::Power { alpha }, p.rms_residual)
    };
    Ok(DiniEstimate {
        finite,
        value: if finite { tail + sampled } else { f64::INFINITY },
        tail,
        sampled,
        model,
        fit_rms,
        t0,
    })
}

/// `count` log-spaced radii from `lo` to `hi` inclusive.
pub fn log_radii(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::field::Smoothness;

    fn spec1(half: f64) -> SamplingSpec {
        SamplingSpec::new(BoundedBox::symmetric(1, half), 16, 64, 7)
    }

    #[test]
    fn constant_has_zero_oscillation() {
        let f = ScalarField::constant(1, 5.0);
        let m = dini_mean_oscillation(&f, &[0.01, 0.1, 1.0], &spec1(2.0)).unwrap();
        assert!(m.omega.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn identity_oscillation_is_half_radius() {
        let f = ScalarField::from_fn(1, Smoothness::Smooth, |x| x[0]);
        let m = dini_mean_oscillation(&f, &[0.5], &spec1(1.0)).unwrap();
        assert!((m.omega[0] - 0.25).abs() < 1e-12, "{}", m.omega[0]);
    }

    #[test]
    fn non_finite_value_names_point() {
        let f = ScalarField::from_fn(1, Smoothness::Rough, |x| 1.0 / x[0]);
        let spec = SamplingSpec::new(BoundedBox::symmetric(1, 1.0), 1, 2, 1);
        // center 0, nodes at ±r/2: finite; the 1/x pole is hit with 3 nodes
        let spec3 = SamplingSpec {
            points_per_ball: 3,
            ..spec
        };
        match dini_mean_oscillation(&f, &[0.3], &spec3) {
            Err(Error::NonFinite { point, .. }) => assert_eq!(point, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_radii() {
        let f = ScalarField::constant(1, 1.0);
        assert!(dini_mean_oscillation(&f, &[0.2, 0.1], &spec1(1.0)).is_err());
        assert!(dini_mean_oscillation(&f, &[0.0, 0.1], &spec1(1.0)).is_err());
    }

    #[test]
    fn dini_linear_modulus() {
        let m = OscillationModulus::from_curve(log_radii(1e-8, 1.0, 1000), 1.0, |t| t);
        let est = dini_integral(&m).unwrap();
        assert!(est.finite);
        assert!((est.value - 1.0).abs() < 1e-3, "{}", est.value);
        assert!(matches!(est.model, TailModel::Power { .. }));
    }

    #[test]
    fn dini_inverse_log_diverges() {
        let m = OscillationModulus::from_curve(log_radii(1e-12, 0.5, 400), 0.5, |t| 1.0 / t.ln().abs());
        let est = dini_integral(&m).unwrap();
        assert!(!est.finite);
        assert!(est.value.is_infinite());
    }

    #[test]
    fn dini_log_three_halves() {
        // antiderivative of |ln t|^(-3/2)/t is 2|ln t|^(-1/2)
        let m = OscillationModulus::from_curve(log_radii(1e-10, 0.5, 1000), 0.5, |t| t.ln().abs().powf(-1.5));
        let est = dini_integral(&m).unwrap();
        let expected = 2.0 * (0.5f64).ln().abs().powf(-0.5);
        assert!(est.finite);
        assert!(
            (est.value - expected).abs() < 1e-3 * expected,
            "{} vs {expected}",
            est.value
        );
    }

    #[test]
    fn dini_needs_four_small_radii() {
        let m = OscillationModulus::from_curve(vec![0.1, 0.2, 0.3, 0.9], 0.5, |t| t);
        assert!(matches!(dini_integral(&m), Err(Error::InsufficientResolution(_))));
    }
}
