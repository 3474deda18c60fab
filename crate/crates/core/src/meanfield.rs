//! Stationary McKean–Vlasov equations ∂i∂j(a^{ij}(x,ρ)ρ) − ∂i(b^i(x,ρ)ρ) = 0 with
//!
//!   A(x,ρ) = A₀(x) + ε∫q(x,y)ρ(y)dy,   b(x,ρ) = b₀(x) + ε∫h(x,y)ρ(y)dy,
//!
//! solved by Picard iteration of the frozen-coefficient map Φ_ε on one grid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{DiffusionMatrixField, DriftBounds, DriftField, FieldRule, ScalarField, Smoothness};
use crate::error::{invalid, Error, Result};
use crate::expr::{Expr, Scope};
use crate::fpk::{euclid, solve_exact_1d, solve_grid_with, GridDensity, GridSpec, QuadratureSpec, SolveOptions};
use crate::stability::{report_from_densities, weighted_l1_distance, CoefficientPair};

/// Kernels q (matrix) and h (vector) as fields of (x, y) ∈ ℝ^{2d}.
#[derive(Debug, Clone)]
pub struct InteractionKernel {
    dim: usize,
    /// q11 (d = 1) or q11, q12, q22 (d = 2); empty when q ≡ 0.
    q: Vec<ScalarField>,
    /// d components; empty when h ≡ 0.
    h: Vec<ScalarField>,
    /// Declared bound on the spectral norm of q(x, y).
    pub q_sup: f64,
    /// Declared bound on |h(x, y)|.
    pub h_sup: f64,
}

impl InteractionKernel {
    pub fn new(dim: usize, q: Vec<ScalarField>, h: Vec<ScalarField>, q_sup: f64, h_sup: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid(format!("dimension {dim} not supported (d in {{1,2}})"));
        }
        let q_len = if dim == 1 { 1 } else { 3 };
        if !(q.is_empty() || q.len() == q_len) {
            return invalid(format!("q needs {q_len} entries in d = {dim}"));
        }
        if !(h.is_empty() || h.len() == dim) {
            return invalid(format!("h needs {dim} components"));
        }
        if q.iter().chain(&h).any(|f| f.dim() != 2 * dim) {
            return invalid("kernel entries must be fields of 2d variables (x, y)");
        }
        if !(q_sup >= 0.0 && h_sup >= 0.0) || !q_sup.is_finite() || !h_sup.is_finite() {
            return invalid("kernel bounds must be finite and >= 0");
        }
        Ok(Self {
            dim,
            q,
            h,
            q_sup,
            h_sup,
        })
    }

    /// Kernel entries from expressions in x1..xd, y1..yd; empty lists mean zero.
    pub fn from_exprs(
        dim: usize,
        q: &[String],
        h: &[String],
        params: &BTreeMap<String, f64>,
        q_sup: f64,
        h_sup: f64,
    ) -> Result<Self> {
        let scope = Scope::kernel(dim, params);
        let parse = |src: &String| -> Result<ScalarField> {
            Ok(ScalarField::expr(
                2 * dim,
                Expr::parse(src, &scope)?,
                Smoothness::Smooth,
            ))
        };
        let q = q.iter().map(parse).collect::<Result<Vec<_>>>()?;
        let h = h.iter().map(parse).collect::<Result<Vec<_>>>()?;
        Self::new(dim, q, h, q_sup, h_sup)
    }

    /// h(x, y) = tanh(y) componentwise, q = 0.
    pub fn tanh_drift(dim: usize) -> Self {
        let h: Vec<String> = (1..=dim).map(|i| format!("tanh(y{i})")).collect();
        Self::from_exprs(dim, &[], &h, &BTreeMap::new(), 0.0, (dim as f64).sqrt()).expect("valid built-in kernel")
    }

    /// q(x, y) = exp(−|y|²)·I, h = 0.
    pub fn gaussian_diffusion(dim: usize) -> Self {
        let g = if dim == 1 {
            "exp(-y1^2)".to_string()
        } else {
            "exp(-y1^2-y2^2)".to_string()
        };
        let q = if dim == 1 {
            vec![g]
        } else {
            vec![g.clone(), "0".to_string(), g]
        };
        Self::from_exprs(dim, &q, &[], &BTreeMap::new(), 1.0, 0.0).expect("valid built-in kernel")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> &[ScalarField] {
        &self.q
    }

    pub fn h(&self) -> &[ScalarField] {
        &self.h
    }

    /// Largest sampled |q| (spectral norm) and |h| over `points` × `points`.
    pub fn sampled_sup(&self, points: &[[f64; 2]]) -> (f64, f64) {
        let d = self.dim;
        let mut v = [0.0; 4];
        let (mut qs, mut hs) = (0.0f64, 0.0f64);
        for x in points {
            for y in points {
                v[..d].copy_from_slice(&x[..d]);
                v[d..2 * d].copy_from_slice(&y[..d]);
                let v = &v[..2 * d];
                if !self.q.is_empty() {
                    let q: Vec<f64> = self.q.iter().map(|f| f.eval(v)).collect();
                    let norm = if d == 1 {
                        q[0].abs()
                    } else {
                        let (m, r) = (0.5 * (q[0] + q[2]), (0.25 * (q[0] - q[2]).powi(2) + q[1] * q[1]).sqrt());
                        (m + r).abs().max((m - r).abs())
                    };
                    qs = qs.max(norm);
                }
                if !self.h.is_empty() {
                    hs = hs.max(self.h.iter().map(|f| f.eval(v).powi(2)).sum::<f64>().sqrt());
                }
            }
        }
        (qs, hs)
    }

    /// Fails when a sampled value exceeds a declared bound.
    pub fn check_bounds(&self, points: &[[f64; 2]]) -> Result<()> {
        let (qs, hs) = self.sampled_sup(points);
        let slack = 1e-12;
        if qs > self.q_sup * (1.0 + slack) + slack {
            return invalid(format!("sampled |q| = {qs} exceeds the declared bound {}", self.q_sup));
        }
        if hs > self.h_sup * (1.0 + slack) + slack {
            return invalid(format!("sampled |h| = {hs} exceeds the declared bound {}", self.h_sup));
        }
        Ok(())
    }
}

/// ∫k(x, y)ρ(y) dy, scaled by `eps`: a constant when k does not read x.
fn integrate_kernel(kernel: &ScalarField, rho: &GridDensity, eps: f64) -> ScalarField {
    let d = rho.dim();
    if kernel.is_constant_in(0..d) {
        let c = rho.integrate(|y| {
            let mut v = [0.0; 4];
            v[d..2 * d].copy_from_slice(&y[..d]);
            kernel.eval(&v[..2 * d])
        });
        return ScalarField::constant(d, eps * c);
    }
    let vol = rho.grid.cell_volume();
    let (points, weights): (Vec<[f64; 2]>, Vec<f64>) = rho
        .cells()
        .filter(|(_, p)| *p > 0.0)
        .map(|(y, p)| (y, eps * p * vol))
        .unzip();
    ScalarField::new(
        d,
        FieldRule::Nonlocal {
            kernel: kernel.clone(),
            points,
            weights,
        },
        kernel.smoothness(),
    )
}

#[derive(Debug, Clone)]
pub struct MeanFieldModel {
    pub a0: DiffusionMatrixField,
    pub b0: DriftField,
    pub kernel: InteractionKernel,
    pub eps: f64,
    /// Lipschitz constants: |A(x,ρ₁)−A(x,ρ₂)| + |b(x,ρ₁)−b(x,ρ₂)| ≤ εN(1+|x|^m)·dist_k(ρ₁,ρ₂).
    pub n_lip: f64,
    pub m_lip: f64,
    pub k: f64,
    /// All iterates live on this grid.
    pub grid: GridSpec,
    pub opts: SolveOptions,
}

impl MeanFieldModel {
    /// N defaults to sup|q| + sup|h| and m to 0, which the bounded kernels satisfy.
    pub fn new(
        a0: DiffusionMatrixField,
        b0: DriftField,
        kernel: InteractionKernel,
        eps: f64,
        k: f64,
        grid: GridSpec,
    ) -> Result<Self> {
        let d = grid.dim;
        if a0.dim() != d || b0.dim() != d || kernel.dim() != d {
            return invalid("base coefficients, kernel and grid must share the dimension");
        }
        if !(0.0..=1.0).contains(&eps) {
            return invalid(format!("coupling eps = {eps} outside [0, 1]"));
        }
        if !(k >= 1.0) {
            return invalid(format!("weight order k = {k} must be >= 1"));
        }
        let n_lip = (kernel.q_sup + kernel.h_sup).max(f64::MIN_POSITIVE);
        Ok(Self {
            a0,
            b0,
            kernel,
            eps,
            n_lip,
            m_lip: 0.0,
            k,
            grid,
            opts: SolveOptions::default(),
        })
    }

    pub fn with_lipschitz(mut self, n: f64, m: f64) -> Result<Self> {
        if !(n > 0.0 && m >= 0.0) {
            return invalid(format!("Lipschitz constants need N > 0 and m >= 0 (got {n}, {m})"));
        }
        self.n_lip = n;
        self.m_lip = m;
        Ok(self)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return invalid(format!("coupling eps = {eps} outside [0, 1]"));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }
}

/// Frozen coefficients (A(·,ρ), b(·,ρ)) with updated Condition-(H) parameters:
/// λ' = min(λ − εs, 1/(1/λ + εs)) for s = sup|q|, and, from εh|x| ≤ εh(1+|x|²)/2,
/// β₁' = β₁ + εh/2, β₂' = β₂ − εh/2, β₃' = β₃ + εh for h = sup|h|.
pub fn nonlocal_coefficients(model: &MeanFieldModel, rho: &GridDensity) -> Result<(DiffusionMatrixField, DriftField)> {
    model.grid.check_same(&rho.grid)?;
    let mass = rho.mass();
    if (mass - 1.0).abs() > 1e-9 {
        return invalid(format!("density has mass {mass}, expected 1"));
    }
    let eps = model.eps;
    if eps == 0.0 {
        return Ok((model.a0.clone(), model.b0.clone()));
    }
    let d = model.dim();
    let kernel = &model.kernel;
    let lambda = model.a0.lambda();
    let s = eps * kernel.q_sup;
    if s >= 0.5 * lambda {
        return Err(Error::EllipticityMargin {
            perturbation: s,
            half_lambda: 0.5 * lambda,
        });
    }
    let a = if kernel.q.is_empty() {
        model.a0.clone()
    } else {
        let entries = model
            .a0
            .entries()
            .iter()
            .zip(&kernel.q)
            .map(|(a0, q)| ScalarField::sum(d, 0.0, vec![(1.0, a0.clone()), (1.0, integrate_kernel(q, rho, eps))]))
            .collect();
        let lambda_new = (lambda - s).min(1.0 / (1.0 / lambda + s));
        DiffusionMatrixField::new(d, entries, lambda_new)?
    };
    let b = if kernel.h.is_empty() {
        model.b0.clone()
    } else {
        let t = eps * kernel.h_sup;
        let bounds = model.b0.bounds();
        if t >= 2.0 * bounds.beta2 {
            return Err(Error::Confinement(format!(
                "eps * sup|h| = {t} removes the confinement beta2 = {}",
                bounds.beta2
            )));
        }
        let components = model
            .b0
            .components()
            .iter()
            .zip(&kernel.h)
            .map(|(b0, h)| ScalarField::sum(d, 0.0, vec![(1.0, b0.clone()), (1.0, integrate_kernel(h, rho, eps))]))
            .collect();
        DriftField::new(
            d,
            components,
            DriftBounds {
                beta: bounds.beta,
                beta1: bounds.beta1 + 0.5 * t,
                beta2: bounds.beta2 - 0.5 * t,
                beta3: bounds.beta3 + t,
            },
        )?
    };
    Ok((a, b))
}

/// Φ_ε(ρ): the stationary density of the equation with coefficients frozen at ρ
/// (exact quadrature in d = 1, the grid scheme in d = 2).
pub fn apply_phi(model: &MeanFieldModel, rho: &GridDensity) -> Result<GridDensity> {
    let (a, b) = nonlocal_coefficients(model, rho)?;
    if model.dim() == 1 {
        solve_exact_1d(&a.entries()[0], &b, &model.grid, QuadratureSpec::default())
    } else {
        solve_grid_with(&a, &b, &model.grid, &model.opts)
    }
}

/// ∫(1+|x|)^{2m+β+k}ρ dx, the moment controlling the contraction bound.
pub fn moment_for_bound(model: &MeanFieldModel, rho: &GridDensity) -> f64 {
    let e = 2.0 * model.m_lip + model.b0.bounds().beta + model.k;
    let d = rho.dim();
    rho.integrate(|x| (1.0 + euclid(&[x[0], if d == 2 { x[1] } else { 0.0 }], d)).powf(e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointTrace {
    #[serde(skip)]
    pub iterates: Vec<GridDensity>,
    /// g_t = dist_k(ρ_{t+1}, ρ_t).
    pub gaps: Vec<f64>,
    /// g_{t+1}/g_t.
    pub factors: Vec<f64>,
    pub converged: bool,
    pub tol: f64,
    /// M̂ = max_t ∫(1+|x|)^{2m+β+k}ρ_t dx over the iterates ρ₁, ρ₂, ….
    pub m_hat: f64,
    pub eps: f64,
    pub n_lip: f64,
}

impl FixedPointTrace {
    pub fn iterations(&self) -> usize {
        self.gaps.len()
    }

    pub fn last(&self) -> &GridDensity {
        self.iterates.last().expect("trace holds the initial density")
    }

    /// εN·C(√M̂ + M̂) for a given stability constant C.
    pub fn bound_form(&self, c: f64) -> f64 {
        self.eps * self.n_lip * c * (self.m_hat.sqrt() + self.m_hat)
    }
}

/// Picard iteration ρ_{t+1} = Φ_ε(ρ_t) until dist_k(ρ_{t+1}, ρ_t) ≤ tol.
/// Running out of iterations with gaps that ever increased is reported as
/// non-contraction; with decreasing gaps the unconverged trace is returned.
pub fn iterate(model: &MeanFieldModel, rho0: &GridDensity, tol: f64, max_iter: usize) -> Result<FixedPointTrace> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance {tol} must be positive"));
    }
    if max_iter == 0 {
        return invalid("max_iter must be positive");
    }
    model.grid.check_same(&rho0.grid)?;
    let mut iterates = vec![rho0.clone()];
    let mut gaps = Vec::new();
    let mut m_hat: f64 = 0.0;
    let mut converged = false;
    for _ in 0..max_iter {
        let current = iterates.last().expect("nonempty");
        let next = apply_phi(model, current)?;
        let gap = weighted_l1_distance(&next, current, model.k)?;
        m_hat = m_hat.max(moment_for_bound(model, &next));
        iterates.push(next);
        gaps.push(gap);
        if gap <= tol {
            converged = true;
            break;
        }
    }
    let factors: Vec<f64> = gaps
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    if !converged && gaps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::NonContraction { gaps });
    }
    Ok(FixedPointTrace {
        iterates,
        gaps,
        factors,
        converged,
        tol,
        m_hat,
        eps: model.eps,
        n_lip: model.n_lip,
    })
}

/// Gaussian location-scale probes: means {−½, 0, ½} along x₁, standard deviations {0.8, 1, 1.25}.
pub fn gaussian_probe_family(grid: &GridSpec) -> Result<Vec<GridDensity>> {
    let mut out = Vec::with_capacity(9);
    for mu in [-0.5, 0.0, 0.5] {
        for s in [0.8f64, 1.0, 1.25] {
            out.push(GridDensity::gaussian(*grid, [mu, 0.0], s * s)?);
        }
    }
    Ok(out)
}

/// All unordered pairs of distinct probes.
pub fn probe_pairs(probes: &[GridDensity]) -> Vec<(GridDensity, GridDensity)> {
    let mut pairs = Vec::new();
    for i in 0..probes.len() {
        for j in i + 1..probes.len() {
            pairs.push((probes[i].clone(), probes[j].clone()));
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionEstimate {
    pub eps: f64,
    /// max over pairs of dist_k(Φρ₁, Φρ₂)/dist_k(ρ₁, ρ₂).
    pub factor: f64,
    pub per_pair: Vec<f64>,
    /// Largest empirical stability ratio over the probe pairs (`None` when every right-hand side vanishes).
    pub c_hat: Option<f64>,
    /// max over probes of ∫(1+|x|)^{2m+β+k}Φ(ρ) dx.
    pub m_hat: f64,
    /// εN·Ĉ(√M̂ + M̂).
    pub bound_form: Option<f64>,
}

/// Measured Lipschitz factor of Φ_ε over the probe pairs.
pub fn contraction_estimate(
    model: &MeanFieldModel,
    pairs: &[(GridDensity, GridDensity)],
) -> Result<ContractionEstimate> {
    if pairs.is_empty() {
        return invalid("contraction_estimate needs at least one probe pair");
    }
    let k = model.k;
    let results = pairs
        .par_iter()
        .enumerate()
        .map(|(index, (r1, r2))| {
            let distance = weighted_l1_distance(r1, r2, k)?;
            if distance <= 1e-14 {
                return Err(Error::CoincidentProbe { index, distance });
            }
            let (a1, b1) = nonlocal_coefficients(model, r1)?;
            let (a2, b2) = nonlocal_coefficients(model, r2)?;
            let p1 = apply_phi(model, r1)?;
            let p2 = apply_phi(model, r2)?;
            let out = weighted_l1_distance(&p1, &p2, k)?;
            let pair = CoefficientPair::new(a1, b1, a2, b2)?;
            let report = report_from_densities(&pair, &p1, &p2, 2.0, k, 0.0)?;
            let m = moment_for_bound(model, &p1).max(moment_for_bound(model, &p2));
            Ok((out / distance, report.c_hat_empirical, m))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_pair: Vec<f64> = results.iter().map(|r| r.0).collect();
    let factor = per_pair.iter().copied().fold(0.0, f64::max);
    let c_hat = results
        .iter()
        .filter_map(|r| r.1)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    let m_hat = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let bound_form = c_hat.map(|c| model.eps * model.n_lip * c * (m_hat.sqrt() + m_hat));
    Ok(ContractionEstimate {
        eps: model.eps,
        factor,
        per_pair,
        c_hat,
        m_hat,
        bound_form,
    })
}

/// Smallest ε in [0, `eps_max`] at which the measured factor reaches 1, by
/// bisection to `tol`; `None` when the factor stays below 1 up to `eps_max`.
pub fn empirical_threshold(
    model: &MeanFieldModel,
    pairs: &[(GridDensity, GridDensity)],
    eps_max: f64,
    tol: f64,
) -> Result<Option<f64>> {
    if !(eps_max > 0.0 && eps_max <= 1.0) || !(tol > 0.0) {
        return invalid("threshold search needs 0 < eps_max <= 1 and tol > 0");
    }
    let factor = |eps: f64| -> Result<f64> {
        match contraction_estimate(&model.clone().with_eps(eps)?, pairs) {
            Ok(c) => Ok(c.factor),
            // Coefficients leaving the admissible class count as non-contractive.
            Err(Error::EllipticityMargin { .. }) | Err(Error::Confinement(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    if factor(eps_max)? < 1.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, eps_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if factor(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
