use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::expr::Expr;

/// Regularity class declared for a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "exponent", rename_all = "kebab-case")]
pub enum Smoothness {
    Smooth,
    Holder(f64),
    DiniLog(f64),
    Rough,
}

/// Uniform samples on [lo, lo + (n-1) step]^d with multilinear interpolation.
/// Points outside the sampled box are clamped to it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    pub lo: f64,
    pub step: f64,
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridSamples {
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.lo) / self.step).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        (i, s - i as f64)
    }

    fn eval(&self, dim: usize, x: &[f64]) -> f64 {
        match dim {
            1 => {
                let (i, t) = self.locate(x[0]);
                self.values[i] * (1.0 - t) + self.values[i + 1] * t
            }
            _ => {
                let (i, s) = self.locate(x[0]);
                let (j, t) = self.locate(x[1]);
                let v = |a: usize, b: usize| self.values[a + self.n * b];
                v(i, j) * (1.0 - s) * (1.0 - t)
                    + v(i + 1, j) * s * (1.0 - t)
                    + v(i, j + 1) * (1.0 - s) * t
                    + v(i + 1, j + 1) * s * t
            }
        }
    }
}

pub type FieldFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// How a scalar field is evaluated.
#[derive(Clone)]
pub enum FieldRule {
    Constant(f64),
    Expr(Expr),
    /// offset + amplitude · f(x) with f(x) = |ln|x||^(-gamma) for 0 < |x| <= 1/2,
    /// f(0) = 0, and f constant (= (ln 2)^(-gamma)) outside the ball B(0, 1/2).
    LogModulus {
        gamma: f64,
        offset: f64,
        amplitude: f64,
    },
    /// mid + amp · mean_i w(x_i), where w is a lacunary cosine series normalized
    /// to [-1, 1]: w(t) = sum_n base^(-n alpha) cos(base^n pi t) / sum_n base^(-n alpha).
    Weierstrass {
        alpha: f64,
        base: f64,
        terms: usize,
        mid: f64,
        amp: f64,
    },
    Samples(GridSamples),
    /// Discrete convolution x ↦ Σ_j w_j f(x - z_j).
    Mollified {
        inner: ScalarField,
        offsets: Vec<[f64; 2]>,
        weights: Vec<f64>,
    },
    /// constant + Σ_i c_i f_i(x)
    Sum {
        constant: f64,
        terms: Vec<(f64, ScalarField)>,
    },
    /// x ↦ Σ_j w_j k(x, y_j) for a kernel k of 2d variables.
    Nonlocal {
        kernel: ScalarField,
        points: Vec<[f64; 2]>,
        weights: Vec<f64>,
    },
    Closure(Arc<FieldFn>),
}

impl fmt::Debug for FieldRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldRule::Constant(c) => write!(f, "Constant({c})"),
            FieldRule::Expr(e) => write!(f, "Expr({e})"),
            FieldRule::LogModulus {
                gamma,
                offset,
                amplitude,
            } => write!(f, "LogModulus(gamma={gamma}, offset={offset}, amplitude={amplitude})"),
            FieldRule::Weierstrass {
                alpha, terms, mid, amp, ..
            } => write!(f, "Weierstrass(alpha={alpha}, terms={terms}, mid={mid}, amp={amp})"),
            FieldRule::Samples(s) => write!(f, "Samples(n={})", s.n),
            FieldRule::Mollified { inner, weights, .. } => {
                write!(f, "Mollified({:?}, nodes={})", inner.rule, weights.len())
            }
            FieldRule::Sum { constant, terms } => {
                write!(f, "Sum({constant}")?;
                for (c, t) in terms {
                    write!(f, " + {c}*{:?}", t.rule)?;
                }
                write!(f, ")")
            }
            FieldRule::Nonlocal { kernel, weights, .. } => {
                write!(f, "Nonlocal({:?}, nodes={})", kernel.rule, weights.len())
            }
            FieldRule::Closure(_) => write!(f, "Closure"),
        }
    }
}

/// A real-valued field of `dim` variables. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ScalarField {
    dim: usize,
    rule: Arc<FieldRule>,
    smoothness: Smoothness,
}

impl ScalarField {
    pub fn new(dim: usize, rule: FieldRule, smoothness: Smoothness) -> Self {
        Self {
            dim,
            rule: Arc::new(rule),
            smoothness,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, FieldRule::Constant(c), Smoothness::Smooth)
    }

    pub fn expr(dim: usize, e: Expr, smoothness: Smoothness) -> Self {
        Self::new(dim, FieldRule::Expr(e), smoothness)
    }

    pub fn from_fn<F>(dim: usize, smoothness: Smoothness, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(dim, FieldRule::Closure(Arc::new(f)), smoothness)
    }

    /// Samples `values` at nodes lo + i·step (row-major in x1) with multilinear interpolation.
    pub fn from_samples(dim: usize, lo: f64, step: f64, n: usize, values: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) || n < 2 || values.len() != n.pow(dim as u32) || step <= 0.0 {
            return invalid("grid samples need d in {1,2}, n >= 2, n^d values and step > 0");
        }
        Ok(Self::new(
            dim,
            FieldRule::Samples(GridSamples { lo, step, n, values }),
            Smoothness::Rough,
        ))
    }

    /// constant + Σ c_i f_i, with the weakest smoothness of the summands.
    pub fn sum(dim: usize, constant: f64, terms: Vec<(f64, ScalarField)>) -> Self {
        let smoothness = terms
            .iter()
            .map(|(_, t)| t.smoothness)
            .fold(Smoothness::Smooth, weakest);
        Self::new(dim, FieldRule::Sum { constant, terms }, smoothness)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rule(&self) -> &FieldRule {
        &self.rule
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    /// True when the field is known to be constant in x (kernels: in the first `dim/2` slots).
    pub fn is_constant_in(&self, slots: std::ops::Range<usize>) -> bool {
        match &*self.rule {
            FieldRule::Constant(_) => true,
            FieldRule::Expr(e) => !e.reads_slots(slots),
            FieldRule::Sum { terms, .. } => terms.iter().all(|(_, t)| t.is_constant_in(slots.clone())),
            _ => false,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &*self.rule {
            FieldRule::Constant(c) => *c,
            FieldRule::Expr(e) => e.eval(x),
            FieldRule::LogModulus {
                gamma,
                offset,
                amplitude,
            } => {
                let r = norm(&x[..self.dim]);
                let f = if r == 0.0 {
                    0.0
                } else {
                    r.min(0.5).ln().abs().powf(-gamma)
                };
                offset + amplitude * f
            }
            FieldRule::Weierstrass {
                alpha,
                base,
                terms,
                mid,
                amp,
            } => {
                let mean = x[..self.dim]
                    .iter()
                    .map(|&t| lacunary(t, *alpha, *base, *terms))
                    .sum::<f64>()
                    / self.dim as f64;
                mid + amp * mean
            }
            FieldRule::Samples(s) => s.eval(self.dim, x),
            FieldRule::Mollified {
                inner,
                offsets,
                weights,
            } => {
                let mut y = [0.0; 2];
                offsets
                    .iter()
                    .zip(weights)
                    .map(|(z, w)| {
                        for i in 0..self.dim {
                            y[i] = x[i] - z[i];
                        }
                        w * inner.eval(&y[..self.dim])
                    })
                    .sum()
            }
            FieldRule::Sum { constant, terms } => constant + terms.iter().map(|(c, t)| c * t.eval(x)).sum::<f64>(),
            FieldRule::Nonlocal {
                kernel,
                points,
                weights,
            } => {
                let d = self.dim;
                let mut v = [0.0; 4];
                v[..d].copy_from_slice(&x[..d]);
                points
                    .iter()
                    .zip(weights)
                    .map(|(y, w)| {
                        v[d..2 * d].copy_from_slice(&y[..d]);
                        w * kernel.eval(&v[..2 * d])
                    })
                    .sum()
            }
            FieldRule::Closure(f) => f(x),
        }
    }
}

fn weakest(a: Smoothness, b: Smoothness) -> Smoothness {
    use Smoothness::*;
    match (a, b) {
        (Rough, _) | (_, Rough) => Rough,
        (DiniLog(g), DiniLog(h)) => DiniLog(g.min(h)),
        (DiniLog(g), _) | (_, DiniLog(g)) => DiniLog(g),
        (Holder(p), Holder(q)) => Holder(p.min(q)),
        (Holder(p), Smooth) | (Smooth, Holder(p)) => Holder(p),
        (Smooth, Smooth) => Smooth,
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

pub(crate) fn lacunary(t: f64, alpha: f64, base: f64, terms: usize) -> f64 {
    let mut freq = std::f64::consts::PI;
    let mut weight = 1.0;
    let mut total = 0.0;
    let mut norm = 0.0;
    let decay = base.powf(-alpha);
    for _ in 0..terms {
        total += weight * (freq * t).cos();
        norm += weight;
        freq *= base;
        weight *= decay;
    }
    total / norm
}

/// Symmetric 2×2 matrix value (only `a11` is meaningful when d = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.a11,
            (1, 1) => self.a22,
            _ => self.a12,
        }
    }

    pub fn eigenvalues(&self, dim: usize) -> (f64, f64) {
        if dim == 1 {
            return (self.a11, self.a11);
        }
        let tr = 0.5 * (self.a11 + self.a22);
        let diff = 0.5 * (self.a11 - self.a22);
        let rad = (diff * diff + self.a12 * self.a12).sqrt();
        (tr - rad, tr + rad)
    }

    pub fn trace(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.a11
        } else {
            self.a11 + self.a22
        }
    }

    pub fn quad_form(&self, dim: usize, x: &[f64]) -> f64 {
        if dim == 1 {
            self.a11 * x[0] * x[0]
        } else {
            self.a11 * x[0] * x[0] + 2.0 * self.a12 * x[0] * x[1] + self.a22 * x[1] * x[1]
        }
    }
}

/// Diffusion matrix A(x) with entries stored once per symmetric pair:
/// `[a11]` in d = 1 and `[a11, a12, a22]` in d = 2.
#[derive(Debug, Clone)]
pub struct DiffusionMatrixField {
    dim: usize,
    entries: Vec<ScalarField>,
    lambda: f64,
}

impl DiffusionMatrixField {
    pub fn new(dim: usize, entries: Vec<ScalarField>, lambda: f64) -> Result<Self> {
        let expected = match dim {
            1 => 1,
            2 => 3,
            _ => return invalid(format!("dimension {dim} not supported (d in {{1,2}})")),
        };
        if entries.len() != expected {
            return invalid(format!(
                "d = {dim} needs {expected} diffusion entries, got {}",
                entries.len()
            ));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return invalid(format!("ellipticity constant {lambda} outside (0, 1]"));
        }
        if entries.iter().any(|e| e.dim() != dim) {
            return invalid("diffusion entry dimension mismatch");
        }
        Ok(Self { dim, entries, lambda })
    }

    pub fn identity(dim: usize) -> Self {
        let one = ScalarField::constant(dim, 1.0);
        let zero = ScalarField::constant(dim, 0.0);
        let entries = if dim == 1 {
            vec![one]
        } else {
            vec![one.clone(), zero, one]
        };
        Self {
            dim,
            entries,
            lambda: 1.0,
        }
    }

    /// Constant matrix; λ is taken as min(λ_min, 1/λ_max).
    pub fn constant(dim: usize, m: Sym2) -> Result<Self> {
        let (lo, hi) = m.eigenvalues(dim);
        let lambda = lo.min(1.0 / hi).min(1.0);
        let entries = if dim == 1 {
            vec![ScalarField::constant(1, m.a11)]
        } else {
            vec![
                ScalarField::constant(2, m.a11),
                ScalarField::constant(2, m.a12),
                ScalarField::constant(2, m.a22),
            ]
        };
        Self::new(dim, entries, lambda)
    }

    /// a(x)·I in any dimension.
    pub fn scalar(field: ScalarField, lambda: f64) -> Result<Self> {
        let dim = field.dim();
        let entries = if dim == 1 {
            vec![field]
        } else {
            vec![field.clone(), ScalarField::constant(dim, 0.0), field]
        };
        Self::new(dim, entries, lambda)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn entries(&self) -> &[ScalarField] {
        &self.entries
    }

    pub fn at(&self, x: &[f64]) -> Sym2 {
        if self.dim == 1 {
            let a = self.entries[0].eval(x);
            Sym2 {
                a11: a,
                a12: 0.0,
                a22: 0.0,
            }
        } else {
            Sym2 {
                a11: self.entries[0].eval(x),
                a12: self.entries[1].eval(x),
                a22: self.entries[2].eval(x),
            }
        }
    }

    /// Entry index pairs (i, j) with i <= j, matching `entries()`.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        if self.dim == 1 {
            vec![(0, 0)]
        } else {
            vec![(0, 0), (0, 1), (1, 1)]
        }
    }

    pub(crate) fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Declared constants of the drift bounds ⟨b,x⟩ ≤ β₁ − β₂|x|² and |b| ≤ β₃(1+|x|)^β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftBounds {
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl DriftBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 1.0 && self.beta1 > 0.0 && self.beta2 > 0.0 && self.beta3 > 0.0) {
            return invalid(format!(
                "drift bounds need beta >= 1 and beta1, beta2, beta3 > 0 (got {self:?})"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DriftField {
    dim: usize,
    components: Vec<ScalarField>,
    bounds: DriftBounds,
}

impl DriftField {
    pub fn new(dim: usize, components: Vec<ScalarField>, bounds: DriftBounds) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid(format!("dimension {dim} not supported (d in {{1,2}})"));
        }
        if components.len() != dim || components.iter().any(|c| c.dim() != dim) {
            return invalid(format!("d = {dim} drift needs {dim} components of dimension {dim}"));
        }
        bounds.validate()?;
        Ok(Self {
            dim,
            components,
            bounds,
        })
    }

    /// b(x) = -θx.
    pub fn ou(dim: usize, theta: f64) -> Self {
        let components = (0..dim)
            .map(|i| ScalarField::from_fn(dim, Smoothness::Smooth, move |x| -theta * x[i]))
            .collect();
        Self {
            dim,
            components,
            bounds: DriftBounds {
                beta: 1.0,
                beta1: 1.0,
                beta2: theta,
                beta3: theta,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> DriftBounds {
        self.bounds
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn at(&self, x: &[f64]) -> [f64; 2] {
        let mut b = [0.0; 2];
        for (i, c) in self.components.iter().enumerate() {
            b[i] = c.eval(x);
        }
        b
    }

    pub(crate) fn with_bounds(mut self, bounds: DriftBounds) -> Self {
        self.bounds = bounds;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_interpolate_their_nodes() {
        let values: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let f = ScalarField::from_samples(1, -1.0, 0.25, 9, values.clone()).unwrap();
        for (i, v) in values.iter().enumerate() {
            assert_eq!(f.eval(&[-1.0 + 0.25 * i as f64]), *v);
        }
        let vals2: Vec<f64> = (0..16).map(|i| i as f64 * 0.5).collect();
        let g = ScalarField::from_samples(2, 0.0, 1.0, 4, vals2.clone()).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                assert_eq!(g.eval(&[i as f64, j as f64]), vals2[i + 4 * j]);
            }
        }
    }

    #[test]
    fn lacunary_series_is_normalized() {
        assert!((lacunary(0.0, 0.5, 2.0, 24) - 1.0).abs() < 1e-15);
        for k in 0..200 {
            let t = -3.0 + 0.0301 * k as f64;
            assert!(lacunary(t, 0.5, 2.0, 24).abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn sym2_eigenvalues() {
        let m = Sym2 {
            a11: 2.0,
            a12: 1.0,
            a22: 2.0,
        };
        let (lo, hi) = m.eigenvalues(2);
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
    }

    #[test]
    fn diffusion_rejects_bad_shapes() {
        assert!(DiffusionMatrixField::new(2, vec![ScalarField::constant(2, 1.0)], 1.0).is_err());
        assert!(DiffusionMatrixField::new(1, vec![ScalarField::constant(1, 1.0)], 0.0).is_err());
        assert!(DiffusionMatrixField::new(3, vec![], 1.0).is_err());
    }
}
