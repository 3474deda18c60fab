//! Weighted L¹ stability of stationary densities under perturbation of (A, b):
//!
//!   ‖(1+|x|^k)(ρ_μ − ρ_σ)‖_{L¹} ≤ C·(‖A_μ − A_σ‖_{L^r(ρ_σ)} + ∫|b_μ − b_σ|(1+|x|^{β+k})ρ_σ dx),
//!
//! the duality identity behind it, and δ-sweeps estimating C empirically.

use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{
    check_condition_h, BoundedBox, ConditionHParams, DiffusionMatrixField, DriftBounds, DriftField, SamplingSpec,
    ScalarField, Sym2,
};
use crate::error::{invalid, Error, Result};
use crate::fpk::{euclid, solve_grid_with, GridDensity, GridSpec, SolveOptions};
use crate::quadrature::fit_line;
use crate::testfn::TestFunction;

/// ∫(1+|x|^k)|ρ₁ − ρ₂| dx by cell quadrature (the P_k distance).
pub fn weighted_l1_distance(rho1: &GridDensity, rho2: &GridDensity, k: f64) -> Result<f64> {
    rho1.grid.check_same(&rho2.grid)?;
    if !(k >= 0.0) {
        return invalid(format!("weight order k = {k} must be >= 0"));
    }
    let d = rho1.dim();
    let sum: f64 = rho1
        .cells()
        .zip(rho2.values())
        .map(|((x, p), q)| (1.0 + euclid(&x, d).powf(k)) * (p - q).abs())
        .sum();
    Ok(sum * rho1.grid.cell_volume())
}

/// Two coefficient pairs (A_μ, b_μ) and (A_σ, b_σ) with the parameters they share.
#[derive(Debug, Clone)]
pub struct CoefficientPair {
    pub a_mu: DiffusionMatrixField,
    pub b_mu: DriftField,
    pub a_sigma: DiffusionMatrixField,
    pub b_sigma: DriftField,
    /// Smallest λ of the two diffusions.
    pub lambda: f64,
    /// Weakest drift bounds covering both drifts (β, β₁, β₃ maximal, β₂ minimal).
    pub bounds: DriftBounds,
}

impl CoefficientPair {
    pub fn new(
        a_mu: DiffusionMatrixField,
        b_mu: DriftField,
        a_sigma: DiffusionMatrixField,
        b_sigma: DriftField,
    ) -> Result<Self> {
        let d = a_sigma.dim();
        if a_mu.dim() != d || b_mu.dim() != d || b_sigma.dim() != d {
            return invalid("both coefficient pairs must share the dimension");
        }
        let (p, q) = (b_mu.bounds(), b_sigma.bounds());
        let bounds = DriftBounds {
            beta: p.beta.max(q.beta),
            beta1: p.beta1.max(q.beta1),
            beta2: p.beta2.min(q.beta2),
            beta3: p.beta3.max(q.beta3),
        };
        bounds.validate()?;
        Ok(Self {
            lambda: a_mu.lambda().min(a_sigma.lambda()),
            a_mu,
            b_mu,
            a_sigma,
            b_sigma,
            bounds,
        })
    }

    pub fn identical(a: DiffusionMatrixField, b: DriftField) -> Result<Self> {
        Self::new(a.clone(), b.clone(), a, b)
    }

    pub fn dim(&self) -> usize {
        self.a_sigma.dim()
    }

    /// Condition (H) for (A_μ, b_μ) and (A_σ, b_σ), each checked against the
    /// shared parameter set. Fails with the first violated clause.
    pub fn check_condition_h(&self, region: &BoundedBox, sampling: &SamplingSpec) -> Result<[ConditionHParams; 2]> {
        let check = |a: &DiffusionMatrixField, b: &DriftField| {
            let a = a.clone().with_lambda(self.lambda);
            let b = b.clone().with_bounds(self.bounds);
            check_condition_h(&a, &b, region, sampling)
        };
        Ok([check(&self.a_mu, &self.b_mu)?, check(&self.a_sigma, &self.b_sigma)?])
    }
}

fn frobenius_gap(p: &Sym2, q: &Sym2, d: usize) -> f64 {
    let e11 = p.a11 - q.a11;
    if d == 1 {
        return e11.abs();
    }
    let e12 = p.a12 - q.a12;
    let e22 = p.a22 - q.a22;
    (e11 * e11 + 2.0 * e12 * e12 + e22 * e22).sqrt()
}

/// (‖A_μ − A_σ‖_{L^r(ρ_σ)} with the Frobenius norm, ∫|b_μ − b_σ|(1+|x|^{β+k})ρ_σ dx).
pub fn rhs_discrepancy(pair: &CoefficientPair, rho_sigma: &GridDensity, r: f64, k: f64) -> Result<(f64, f64)> {
    if !(r > 1.0) || !r.is_finite() {
        return invalid(format!("exponent r = {r} must be in (1, inf)"));
    }
    if !(k >= 1.0) {
        return invalid(format!("weight order k = {k} must be >= 1"));
    }
    let d = pair.dim();
    if rho_sigma.dim() != d {
        return Err(Error::Shape("density and coefficients differ in dimension".into()));
    }
    let beta = pair.bounds.beta;
    let diffusion = rho_sigma
        .integrate(|x| frobenius_gap(&pair.a_mu.at(x), &pair.a_sigma.at(x), d).powf(r))
        .powf(1.0 / r);
    let drift = rho_sigma.integrate(|x| {
        let (p, q) = (pair.b_mu.at(x), pair.b_sigma.at(x));
        let gap = (0..d).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>().sqrt();
        let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        gap * (1.0 + norm.powf(beta + k))
    });
    Ok((diffusion, drift))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityReport {
    /// ∫(ρ_μ − ρ_σ) L_{A_μ,b_μ}v dx.
    pub difference_term: f64,
    /// ∫[tr((A_μ − A_σ)D²v) + ⟨b_μ − b_σ, ∇v⟩]ρ_σ dx.
    pub coefficient_term: f64,
    /// |difference_term + coefficient_term|.
    pub residual: f64,
}

/// Both sides of ∫(ρ_μ−ρ_σ)L_μ v = −∫[tr((A_μ−A_σ)D²v) + ⟨b_μ−b_σ,∇v⟩]ρ_σ, by
/// cell quadrature with the derivatives of v evaluated exactly.
pub fn duality_check(
    pair: &CoefficientPair,
    rho_mu: &GridDensity,
    rho_sigma: &GridDensity,
    v: &TestFunction,
) -> Result<DualityReport> {
    rho_mu.grid.check_same(&rho_sigma.grid)?;
    let grid = rho_sigma.grid;
    let d = pair.dim();
    if grid.dim != d || v.dim != d {
        return Err(Error::Shape("density, coefficients and v differ in dimension".into()));
    }
    // Every point of the support must lie at least one cell inside the box.
    let reach = (0..d).map(|i| v.center[i].abs() + v.scale).fold(0.0, f64::max);
    if reach >= grid.radius - grid.h() {
        return Err(Error::Support {
            support: reach,
            box_radius: grid.radius,
        });
    }
    let vol = grid.cell_volume();
    let (mut diff, mut coef) = (0.0, 0.0);
    for ((x, pm), ps) in rho_mu.cells().zip(rho_sigma.values()) {
        let x = &x[..d];
        let jet = v.jet(x);
        if jet.value == 0.0 && jet.grad[..d].iter().all(|g| *g == 0.0) {
            continue;
        }
        let (am, asg) = (pair.a_mu.at(x), pair.a_sigma.at(x));
        let (bm, bs) = (pair.b_mu.at(x), pair.b_sigma.at(x));
        let mut l_mu = 0.0;
        let mut gap = 0.0;
        for i in 0..d {
            l_mu += bm[i] * jet.grad[i];
            gap += (bm[i] - bs[i]) * jet.grad[i];
            for j in 0..d {
                l_mu += am.get(i, j) * jet.hess[i][j];
                gap += (am.get(i, j) - asg.get(i, j)) * jet.hess[i][j];
            }
        }
        diff += (pm - ps) * l_mu;
        coef += gap * ps;
    }
    let (diff, coef) = (diff * vol, coef * vol);
    Ok(DualityReport {
        difference_term: diff,
        coefficient_term: coef,
        residual: (diff + coef).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityConvergence {
    pub cells: Vec<usize>,
    pub reports: Vec<DualityReport>,
    /// max_j 4^j·|R_j − R_{j+1}| over consecutive levels, referred to the base grid.
    pub discretization_error: f64,
    /// Least-squares slope of −log residual against log n.
    pub order: f64,
}

/// Solves both stationary equations on `grid` and `levels − 1` refinements and
/// runs [`duality_check`] on each.
pub fn duality_convergence(
    pair: &CoefficientPair,
    grid: &GridSpec,
    v: &TestFunction,
    levels: usize,
    opts: &SolveOptions,
) -> Result<DualityConvergence> {
    if levels < 3 {
        return invalid("duality_convergence needs at least three levels");
    }
    let mut grids = vec![*grid];
    for _ in 1..levels {
        let g = grids[grids.len() - 1].refined();
        grids.push(g);
    }
    let reports = grids
        .iter()
        .map(|g| {
            let rho_mu = solve_grid_with(&pair.a_mu, &pair.b_mu, g, opts)?;
            let rho_sigma = solve_grid_with(&pair.a_sigma, &pair.b_sigma, g, opts)?;
            duality_check(pair, &rho_mu, &rho_sigma, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let signed: Vec<f64> = reports.iter().map(|r| r.difference_term + r.coefficient_term).collect();
    let discretization_error = signed
        .windows(2)
        .enumerate()
        .map(|(j, p)| 4f64.powi(j as i32) * (p[0] - p[1]).abs())
        .fold(0.0, f64::max);
    let xs: Vec<f64> = grids.iter().map(|g| (g.cells as f64).ln()).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.residual.max(1e-300).ln()).collect();
    let order = -fit_line(&xs, &ys)
        .ok_or_else(|| Error::Degenerate("residual fit is undefined".into()))?
        .slope;
    Ok(DualityConvergence {
        cells: grids.iter().map(|g| g.cells).collect(),
        reports,
        discretization_error,
        order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub delta: f64,
    pub k: f64,
    pub r: f64,
    /// r′ = r/(r − 1).
    pub r_conjugate: f64,
    pub lhs: f64,
    pub rhs_diffusion: f64,
    pub rhs_drift: f64,
    /// Empirical ratio lhs/(rhs_diffusion + rhs_drift); `None` when both terms vanish.
    pub c_hat_empirical: Option<f64>,
}

/// Solves both stationary equations on `grid` and compares the two sides.
pub fn stability_report(
    pair: &CoefficientPair,
    grid: &GridSpec,
    r: f64,
    k: f64,
    delta: f64,
    opts: &SolveOptions,
) -> Result<StabilityReport> {
    let rho_mu = solve_grid_with(&pair.a_mu, &pair.b_mu, grid, opts)?;
    let rho_sigma = solve_grid_with(&pair.a_sigma, &pair.b_sigma, grid, opts)?;
    report_from_densities(pair, &rho_mu, &rho_sigma, r, k, delta)
}

pub fn report_from_densities(
    pair: &CoefficientPair,
    rho_mu: &GridDensity,
    rho_sigma: &GridDensity,
    r: f64,
    k: f64,
    delta: f64,
) -> Result<StabilityReport> {
    let (rhs_diffusion, rhs_drift) = rhs_discrepancy(pair, rho_sigma, r, k)?;
    let lhs = weighted_l1_distance(rho_mu, rho_sigma, k)?;
    let rhs = rhs_diffusion + rhs_drift;
    Ok(StabilityReport {
        delta,
        k,
        r,
        r_conjugate: r / (r - 1.0),
        lhs,
        rhs_diffusion,
        rhs_drift,
        c_hat_empirical: (rhs > 0.0).then(|| lhs / rhs),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub deltas: Vec<f64>,
    pub reports: Vec<StabilityReport>,
    /// Least-squares slope of log lhs against log δ over δ > 0.
    pub slope: f64,
    pub intercept: f64,
    pub fit_rms: f64,
    pub fit_r_squared: f64,
    pub c_hat_max: f64,
    pub c_hat_min: f64,
}

impl SweepResult {
    /// max Ĉ / min Ĉ over the sweep.
    pub fn c_hat_spread(&self) -> f64 {
        self.c_hat_max / self.c_hat_min
    }
}

/// Perturbation families (A_μ, b_μ) around the OU pair A_σ = I, b_σ = −x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuFamily {
    /// b_μ = −(1+δ)x.
    Drift,
    /// A_μ = (1+δ)I.
    Diffusion,
}

impl OuFamily {
    pub fn pair(self, dim: usize, delta: f64) -> Result<CoefficientPair> {
        if !(delta > -1.0) || !delta.is_finite() {
            return invalid(format!("perturbation delta = {delta} must exceed -1"));
        }
        let (a_mu, b_mu) = match self {
            OuFamily::Drift => (DiffusionMatrixField::identity(dim), DriftField::ou(dim, 1.0 + delta)),
            OuFamily::Diffusion => {
                let s = 1.0 + delta;
                let lambda = s.min(1.0 / s);
                (
                    DiffusionMatrixField::scalar(ScalarField::constant(dim, s), lambda)?,
                    DriftField::ou(dim, 1.0),
                )
            }
        };
        CoefficientPair::new(
            a_mu,
            b_mu,
            DiffusionMatrixField::identity(dim),
            DriftField::ou(dim, 1.0),
        )
    }
}

/// Runs [`stability_report`] for every δ (in parallel) and fits log lhs
/// against log δ. δ = 0 is allowed and left out of the fit.
pub fn stability_sweep<F>(
    family: F,
    deltas: &[f64],
    grid: &GridSpec,
    r: f64,
    k: f64,
    opts: &SolveOptions,
) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<CoefficientPair> + Sync,
{
    if deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return invalid("perturbation sizes must be finite and >= 0");
    }
    if deltas.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("perturbation sizes must be strictly increasing");
    }
    if deltas.iter().filter(|d| **d > 0.0).count() < 2 {
        return invalid("the log-log fit needs at least two positive perturbation sizes");
    }
    let reports = deltas
        .par_iter()
        .map(|&delta| {
            family(delta)
                .and_then(|pair| stability_report(&pair, grid, r, k, delta, opts))
                .map_err(|e| Error::AtDelta {
                    delta,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted: Vec<&StabilityReport> = reports.iter().filter(|r| r.delta > 0.0).collect();
    if let Some(bad) = fitted.iter().find(|r| !(r.lhs > 0.0)) {
        return Err(Error::Degenerate(format!(
            "lhs vanishes at delta = {}; the log-log fit is undefined",
            bad.delta
        )));
    }
    let xs: Vec<f64> = fitted.iter().map(|r| r.delta.ln()).collect();
    let ys: Vec<f64> = fitted.iter().map(|r| r.lhs.ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::Degenerate("log-log fit is undefined".into()))?;
    let c: Vec<f64> = fitted.iter().filter_map(|r| r.c_hat_empirical).collect();
    if c.is_empty() {
        return Err(Error::Degenerate(
            "right-hand side vanishes for every perturbation".into(),
        ));
    }
    Ok(SweepResult {
        deltas: deltas.to_vec(),
        reports,
        slope: fit.slope,
        intercept: fit.intercept,
        fit_rms: fit.rms_residual,
        fit_r_squared: fit.r_squared,
        c_hat_max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        c_hat_min: c.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_diffusion_gap_is_delta() {
        let pair = OuFamily::Diffusion.pair(1, 0.25).unwrap();
        let rho = GridDensity::gaussian(GridSpec::new(1, 8.0, 256).unwrap(), [0.0; 2], 1.0).unwrap();
        let (diff, drift) = rhs_discrepancy(&pair, &rho, 2.0, 1.0).unwrap();
        assert!((diff - 0.25).abs() < 1e-12);
        assert_eq!(drift, 0.0);
    }

    #[test]
    fn sweep_rejects_unsorted_deltas() {
        let g = GridSpec::new(1, 8.0, 64).unwrap();
        let f = |d| OuFamily::Drift.pair(1, d);
        let err = stability_sweep(f, &[0.1, 0.01, 0.2], &g, 2.0, 1.0, &SolveOptions::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
