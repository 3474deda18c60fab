use serde::Serialize;

use super::problem::{GrowthBounds, PoissonProblem, PoissonSolution};
use crate::error::{invalid, Result};
use crate::fpk::{euclid, GridSpec};

/// Second-order first and second differences along one grid line (one-sided at the ends).
fn line_derivatives(v: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        d1[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        d2[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    }
    d1[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d1[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    d2[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h);
    d2[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / (h * h);
    (d1, d2)
}

/// Centered finite-difference gradient and Hessian of cell values.
pub(crate) fn fd_derivatives(grid: &GridSpec, u: &[f64]) -> (Vec<[f64; 2]>, Vec<[f64; 3]>) {
    let n = grid.cells;
    let h = grid.h();
    let len = grid.len();
    let mut grad = vec![[0.0; 2]; len];
    let mut hess = vec![[0.0; 3]; len];
    if grid.dim == 1 {
        let (d1, d2) = line_derivatives(u, h);
        for c in 0..n {
            grad[c][0] = d1[c];
            hess[c][0] = d2[c];
        }
        return (grad, hess);
    }
    let mut dx = vec![0.0; len];
    for j in 0..n {
        let row: Vec<f64> = (0..n).map(|i| u[grid.index(i, j)]).collect();
        let (d1, d2) = line_derivatives(&row, h);
        for i in 0..n {
            let idx = grid.index(i, j);
            grad[idx][0] = d1[i];
            hess[idx][0] = d2[i];
            dx[idx] = d1[i];
        }
    }
    for i in 0..n {
        let col: Vec<f64> = (0..n).map(|j| u[grid.index(i, j)]).collect();
        let (d1, d2) = line_derivatives(&col, h);
        let dcol: Vec<f64> = (0..n).map(|j| dx[grid.index(i, j)]).collect();
        let (mixed, _) = line_derivatives(&dcol, h);
        for j in 0..n {
            let idx = grid.index(i, j);
            grad[idx][1] = d1[j];
            hess[idx][2] = d2[j];
            hess[idx][1] = mixed[j];
        }
    }
    (grad, hess)
}

/// L_{A,b}u − ψ̃ at every cell from the given derivatives.
pub(crate) fn pointwise_residual(prob: &PoissonProblem, grad: &[[f64; 2]], hess: &[[f64; 3]]) -> Vec<f64> {
    let grid = prob.grid();
    let d = grid.dim;
    (0..grid.len())
        .map(|idx| {
            let x = grid.center(idx);
            let m = prob.a.at(&x[..d]);
            let bv = prob.b.at(&x[..d]);
            let hs = hess[idx];
            let second = if d == 1 {
                m.a11 * hs[0]
            } else {
                m.a11 * hs[0] + 2.0 * m.a12 * hs[1] + m.a22 * hs[2]
            };
            let first: f64 = (0..d).map(|i| bv[i] * grad[idx][i]).sum();
            second + first - prob.psi_tilde(&x[..d])
        })
        .collect()
}

fn in_region(x: &[f64; 2], d: usize, radius: Option<f64>) -> bool {
    match radius {
        None => true,
        Some(r) => x[..d].iter().all(|t| t.abs() <= r),
    }
}

/// G₀, G₁, H and Ψ over the cells with |x|∞ ≤ `radius` (all cells if `None`).
pub(crate) fn growth_bounds(
    prob: &PoissonProblem,
    grid: &GridSpec,
    u: &[f64],
    grad: &[[f64; 2]],
    hess: &[[f64; 3]],
    radius: Option<f64>,
) -> GrowthBounds {
    let d = grid.dim;
    let (k, beta, p, s) = (prob.k, prob.beta(), prob.p, prob.s());
    let (mut psi_sup, mut g0, mut g1, mut hsum) = (0.0f64, 0.0f64, 0.0f64, 0.0);
    for idx in 0..grid.len() {
        let x = grid.center(idx);
        if !in_region(&x, d, radius) {
            continue;
        }
        let r = euclid(&x, d);
        psi_sup = psi_sup.max(prob.psi_tilde(&x[..d]).abs() / (1.0 + r.powf(k)));
        g0 = g0.max(u[idx].abs() / (1.0 + r.powf(k)));
        let gn = grad[idx][..d].iter().map(|t| t * t).sum::<f64>().sqrt();
        g1 = g1.max(gn / (1.0 + r.powf(k + beta)));
        let hs = hess[idx];
        let frob = if d == 1 {
            hs[0].abs()
        } else {
            (hs[0] * hs[0] + 2.0 * hs[1] * hs[1] + hs[2] * hs[2]).sqrt()
        };
        hsum += frob.powf(p) / (1.0 + r.powf(s));
    }
    GrowthBounds {
        k,
        beta,
        p,
        s,
        psi_sup,
        g0,
        g1,
        h: (hsum * grid.cell_volume()).powf(1.0 / p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusQuotients {
    pub radius: f64,
    pub bounds: GrowthBounds,
    /// G₀/Ψ, G₁/Ψ, H/Ψ (0 when Ψ = 0).
    pub q0: f64,
    pub q1: f64,
    pub qh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub overall: GrowthBounds,
    pub quotients: [f64; 3],
    pub per_radius: Vec<RadiusQuotients>,
}

/// Reports G₀, G₁, H, Ψ on the whole grid and their quotients restricted to
/// |x|∞ ≤ r for each r in `radii`.
pub fn verify_growth_bounds(sol: &PoissonSolution, prob: &PoissonProblem, radii: &[f64]) -> Result<GrowthReport> {
    sol.grid.check_same(prob.grid())?;
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return invalid(format!("radius {r} must be positive"));
    }
    let per_radius = radii
        .iter()
        .map(|&r| {
            let bounds = growth_bounds(prob, &sol.grid, &sol.u, &sol.grad, &sol.hess, Some(r));
            let [q0, q1, qh] = bounds.quotients();
            RadiusQuotients {
                radius: r,
                bounds,
                q0,
                q1,
                qh,
            }
        })
        .collect();
    Ok(GrowthReport {
        overall: sol.bounds,
        quotients: sol.bounds.quotients(),
        per_radius,
    })
}

/// max |L_{A,b}u − ψ̃| over the cells with |x|∞ ≤ R/2.
pub fn interior_residual(sol: &PoissonSolution) -> f64 {
    interior_max(&sol.grid, &sol.residual)
}

/// max |values| over the cells with |x|∞ ≤ R/2.
pub fn interior_max(grid: &GridSpec, values: &[f64]) -> f64 {
    let half = 0.5 * grid.radius;
    (0..grid.len())
        .filter(|&i| in_region(&grid.center(i), grid.dim, Some(half)))
        .map(|i| values[i].abs())
        .fold(0.0, f64::max)
}

/// Residual of a 1D solution with fourth-order differences, on cells with |x| ≤ R/2.
/// Returns (x, L_{A,b}u − ψ̃) pairs.
pub fn residual_fourth_order_1d(sol: &PoissonSolution, prob: &PoissonProblem) -> Result<Vec<(f64, f64)>> {
    let grid = sol.grid;
    if grid.dim != 1 {
        return invalid("fourth-order residual is implemented for d = 1");
    }
    let h = grid.h();
    let u = &sol.u;
    let half = 0.5 * grid.radius;
    Ok((2..grid.cells - 2)
        .filter(|&c| grid.coord(c).abs() <= half)
        .map(|c| {
            let x = grid.coord(c);
            let d1 = (-u[c + 2] + 8.0 * u[c + 1] - 8.0 * u[c - 1] + u[c - 2]) / (12.0 * h);
            let d2 = (-u[c + 2] + 16.0 * u[c + 1] - 30.0 * u[c] + 16.0 * u[c - 1] - u[c - 2]) / (12.0 * h * h);
            let r = prob.a.at(&[x]).a11 * d2 + prob.b.at(&[x])[0] * d1 - prob.psi_tilde(&[x]);
            (x, r)
        })
        .collect())
}
