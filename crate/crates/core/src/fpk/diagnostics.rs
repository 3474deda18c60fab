use serde::Serialize;

use super::grid::{euclid, GridDensity, GridSpec};
use super::scheme::{solve_grid_with, SolveOptions};
use crate::coeffs::{DiffusionMatrixField, DriftField};
use crate::error::{invalid, Error, Result};
use crate::testfn::{random_test_functions, TestFunction};

/// ∫|x|^k ρ dx by cell quadrature.
pub fn moment(rho: &GridDensity, k: f64) -> f64 {
    let d = rho.dim();
    let vol = rho.grid.cell_volume();
    if k == 0.0 {
        return rho.values().iter().sum::<f64>() * vol;
    }
    rho.cells().map(|(x, v)| euclid(&x, d).powf(k) * v).sum::<f64>() * vol
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub moments: Vec<(f64, f64)>,
    pub grid: GridSpec,
}

pub fn moment_report(rho: &GridDensity, ks: &[f64]) -> Result<MomentReport> {
    if let Some(k) = ks.iter().find(|k| !(**k >= 0.0)) {
        return invalid(format!("moment order {k} must be >= 0"));
    }
    Ok(MomentReport {
        moments: ks.iter().map(|&k| (k, moment(rho, k))).collect(),
        grid: rho.grid,
    })
}

/// (∫ (1+|x|)^{kp} ρ^p dx)^{1/p}.
pub fn weighted_lp_norm(rho: &GridDensity, k: f64, p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return invalid(format!("exponent p = {p} must be finite and > 1"));
    }
    if !(k >= 0.0) {
        return invalid(format!("weight order k = {k} must be >= 0"));
    }
    let d = rho.dim();
    let s: f64 = rho
        .cells()
        .map(|(x, v)| ((1.0 + euclid(&x, d)).powf(k) * v).powf(p))
        .sum::<f64>()
        * rho.grid.cell_volume();
    Ok(s.powf(1.0 / p))
}

/// max over cells of (1+|x|)^k ρ (the p = ∞ variant).
pub fn weighted_sup_norm(rho: &GridDensity, k: f64) -> Result<f64> {
    if !(k >= 0.0) {
        return invalid(format!("weight order k = {k} must be >= 0"));
    }
    let d = rho.dim();
    Ok(rho
        .cells()
        .map(|(x, v)| (1.0 + euclid(&x, d)).powf(k) * v)
        .fold(0.0, f64::max))
}

/// max/min of ρ over the cells with center in B(0, R).
pub fn harnack_ratio(rho: &GridDensity, radius: f64) -> Result<f64> {
    if !(radius > 0.0) || radius > rho.grid.radius {
        return invalid(format!(
            "ball radius {radius} must be positive and inside the box of radius {}",
            rho.grid.radius
        ));
    }
    let d = rho.dim();
    let (mut lo, mut hi, mut count) = (f64::INFINITY, 0.0f64, 0usize);
    for (x, v) in rho.cells() {
        if euclid(&x, d) < radius {
            lo = lo.min(v);
            hi = hi.max(v);
            count += 1;
        }
    }
    if count == 0 {
        return invalid(format!("no cell center inside B(0, {radius})"));
    }
    if lo <= 0.0 {
        return Err(Error::Degenerate(format!("density vanishes inside B(0, {radius})")));
    }
    Ok(hi / lo)
}

/// L_{A,b}φ = a^{ij}∂ij φ + b^i ∂i φ at x.
pub fn generator(a: &DiffusionMatrixField, b: &DriftField, phi: &TestFunction, x: &[f64]) -> f64 {
    let d = a.dim();
    let jet = phi.jet(x);
    if jet.value == 0.0 && jet.grad == [0.0; 2] {
        return 0.0;
    }
    let m = a.at(x);
    let bv = b.at(x);
    let mut s = 0.0;
    for i in 0..d {
        s += bv[i] * jet.grad[i];
        for j in 0..d {
            s += m.get(i, j) * jet.hess[i][j];
        }
    }
    s
}

/// ∫ ρ L_{A,b}φ dx by cell quadrature.
pub fn weak_residual(rho: &GridDensity, a: &DiffusionMatrixField, b: &DriftField, phi: &TestFunction) -> f64 {
    rho.integrate(|x| generator(a, b, phi, x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakFormEntry {
    pub test_function: TestFunction,
    /// ∫ ρ_n Lφ on the base grid.
    pub residual: f64,
    /// max_j 4^j·|W_j − W_{j+1}| over the refinement levels, plus a floor of
    /// 10⁻¹²·sup|Lφ|, where W_j = ∫ ρ_{2^j n} Lφ.
    pub discretization_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakFormReport {
    pub entries: Vec<WeakFormEntry>,
    pub factor: f64,
    pub passed: bool,
}

/// Checks |∫ρLφ| ≤ factor × (measured discretization error) for the given
/// test functions. `levels` holds the density on a base grid followed by its
/// successive refinements (at least two). A single difference W_n − W_{2n}
/// can be small by cancellation between the scheme error and the quadrature
/// error of a coarsely resolved φ, so every consecutive pair is used, scaled
/// to the base grid assuming second order.
pub fn weak_form_check(
    a: &DiffusionMatrixField,
    b: &DriftField,
    levels: &[GridDensity],
    test_functions: &[TestFunction],
    factor: f64,
) -> Result<WeakFormReport> {
    if levels.len() < 2 {
        return invalid("weak_form_check needs the base density and at least one refinement");
    }
    for pair in levels.windows(2) {
        let (coarse, fine) = (&pair[0].grid, &pair[1].grid);
        if fine.cells != 2 * coarse.cells || fine.radius != coarse.radius || fine.dim != coarse.dim {
            return Err(Error::Shape(
                "densities must live on successive refinements of one grid".into(),
            ));
        }
    }
    let d = levels[0].dim();
    let finest = &levels[levels.len() - 1];
    let entries: Vec<WeakFormEntry> = test_functions
        .iter()
        .map(|phi| {
            let w: Vec<f64> = levels.iter().map(|rho| weak_residual(rho, a, b, phi)).collect();
            let sup = finest
                .cells()
                .map(|(x, _)| generator(a, b, phi, &x[..d]).abs())
                .fold(0.0, f64::max);
            let err = w
                .windows(2)
                .enumerate()
                .map(|(j, p)| 4f64.powi(j as i32) * (p[0] - p[1]).abs())
                .fold(0.0, f64::max)
                + 1e-12 * sup;
            WeakFormEntry {
                test_function: *phi,
                residual: w[0],
                discretization_error: err,
                passed: w[0].abs() <= factor * err,
            }
        })
        .collect();
    let passed = entries.iter().all(|e| e.passed);
    Ok(WeakFormReport {
        entries,
        factor,
        passed,
    })
}

/// Number of grids used by [`weak_form_check_grid`]: the base grid and two refinements.
pub const WEAK_FORM_LEVELS: usize = 3;

/// Solves on `grid` and its refinements and runs [`weak_form_check`] with
/// `count` random test functions centered within a quarter of the box radius.
pub fn weak_form_check_grid(
    a: &DiffusionMatrixField,
    b: &DriftField,
    grid: &GridSpec,
    count: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<WeakFormReport> {
    let mut grids = vec![*grid];
    for _ in 1..WEAK_FORM_LEVELS {
        let next = grids[grids.len() - 1].refined();
        grids.push(next);
    }
    let levels = grids
        .iter()
        .map(|g| solve_grid_with(a, b, g, opts))
        .collect::<Result<Vec<_>>>()?;
    let phis = random_test_functions(grid.dim, count, 0.25 * grid.radius, seed);
    weak_form_check(a, b, &levels, &phis, 10.0)
}
