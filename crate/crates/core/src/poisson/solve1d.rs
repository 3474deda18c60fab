//! One-dimensional Poisson solver from the first integral (aρu′)′ = ψ̃ρ:
//!
//!   u′(x) =  ∫_{−∞}^x ψ̃(t) e^{Φ(t)−Φ(x)}/a(t) dt   for x < 0,
//!   u′(x) = −∫_x^{∞}  ψ̃(t) e^{Φ(t)−Φ(x)}/a(t) dt   for x ≥ 0,
//!
//! with Φ = ∫₀^x b/a. The integrals run over the grid centers continued past ±R
//! until e^{Φ} has decayed by e^{−60}, so u is not affected by the truncation.

use super::bounds::{fd_derivatives, growth_bounds, pointwise_residual};
use super::lyapunov::lyapunov_constants;
use super::problem::{Centering, PoissonProblem, PoissonSolution};
use crate::coeffs::BoundedBox;
use crate::error::{invalid, Error, Result};
use crate::quadrature::GaussLegendre;

/// Tolerance on |∫_{−∞}^R ψ̃ρ dx|.
pub const TAIL_TOL: f64 = 1e-6;
const TAIL_DECAY: f64 = 60.0;
const GL_ORDER: usize = 8;

struct Mesh {
    x: Vec<f64>,
    phi: Vec<f64>,
    /// Index of x = 0.
    zero: usize,
    /// Index of the first grid center.
    first_center: usize,
}

pub fn solve_poisson_1d(prob: &PoissonProblem) -> Result<PoissonSolution> {
    let grid = *prob.grid();
    if grid.dim != 1 {
        return invalid("solve_poisson_1d needs d = 1");
    }
    let a = |t: f64| prob.a.at(&[t]).a11;
    let b = |t: f64| prob.b.at(&[t])[0];
    let rule = GaussLegendre::new(GL_ORDER);
    let ratio = |t: f64| {
        let av = a(t);
        if !(av > 0.0) {
            return Err(Error::Ellipticity(format!("a({t}) = {av} is not positive")));
        }
        Ok(b(t) / av)
    };
    let step = |x0: f64, x1: f64| -> Result<f64> {
        let mut s = 0.0;
        for (t, w) in rule.mapped(x0, x1) {
            s += w * ratio(t)?;
        }
        Ok(s)
    };

    // Mesh: 0 and the cell centers, continued outward until the tail is negligible.
    let h = grid.h();
    let n = grid.cells;
    let max_extra = 16 * n;
    let mut sides: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (side, sign) in [(0usize, -1.0f64), (1, 1.0)] {
        let mut prev = (0.0, 0.0);
        let mut side_peak: f64 = 0.0;
        for m in 0.. {
            let x = sign * (m as f64 + 0.5) * h;
            let phi = prev.1 + step(prev.0, x)?;
            if !phi.is_finite() {
                return Err(Error::NonFinite {
                    point: vec![x],
                    value: phi,
                });
            }
            sides[side].push((x, phi));
            prev = (x, phi);
            side_peak = side_peak.max(phi);
            if m + 1 >= n / 2 && phi < side_peak - TAIL_DECAY {
                break;
            }
            if m + 1 >= n / 2 + max_extra {
                return Err(Error::Truncation(format!(
                    "density tail does not decay within {max_extra} cells beyond x = {}",
                    sign * grid.radius
                )));
            }
        }
    }
    let left = std::mem::take(&mut sides[0]);
    let right = std::mem::take(&mut sides[1]);
    let mut mesh = Mesh {
        x: Vec::with_capacity(left.len() + right.len() + 1),
        phi: Vec::with_capacity(left.len() + right.len() + 1),
        zero: left.len(),
        first_center: left.len() - n / 2,
    };
    for &(x, p) in left.iter().rev() {
        mesh.x.push(x);
        mesh.phi.push(p);
    }
    mesh.x.push(0.0);
    mesh.phi.push(0.0);
    for &(x, p) in &right {
        mesh.x.push(x);
        mesh.phi.push(p);
    }
    let len = mesh.x.len();
    let peak = mesh.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Panel integrals ∫_{x_j}^{x_{j+1}} w(t) e^{Φ(t)−Φ(x_j)}/a(t) dt for w = 1 and w = ψ.
    let mut unit = vec![0.0; len - 1];
    let mut weighted = vec![0.0; len - 1];
    for j in 0..len - 1 {
        let (x0, x1) = (mesh.x[j], mesh.x[j + 1]);
        for (t, w) in rule.mapped(x0, x1) {
            let e = step(x0, t)?.exp() / a(t);
            unit[j] += w * e;
            weighted[j] += w * e * prob.psi.eval(&[t]);
        }
    }
    let scale = |j: usize| (mesh.phi[j] - peak).exp();
    let z: f64 = (0..len - 1).map(|j| unit[j] * scale(j)).sum();
    let mean_full: f64 = (0..len - 1).map(|j| weighted[j] * scale(j)).sum::<f64>() / z;
    let mean = match prob.centering {
        Centering::Density if prob.psi.is_constant_in(0..1) => prob.mean,
        Centering::Density => mean_full,
        Centering::None => 0.0,
    };
    let psi_t = |t: f64| prob.psi.eval(&[t]) - mean;
    // ψ̃-weighted panel integrals.
    let tilde: Vec<f64> = (0..len - 1).map(|j| weighted[j] - mean * unit[j]).collect();

    let last_center = mesh.first_center + n;
    let up_to_r: f64 = (0..last_center).map(|j| tilde[j] * scale(j)).sum::<f64>() / z;
    if up_to_r.abs() > TAIL_TOL {
        return Err(Error::Truncation(format!(
            "|integral of centered psi * rho up to x = R| = {:.3e} exceeds {TAIL_TOL:e}",
            up_to_r.abs()
        )));
    }

    // u′ on the mesh.
    let mut du = vec![0.0; len];
    let mut acc = 0.0;
    for j in (mesh.zero..len - 1).rev() {
        acc = tilde[j] + (mesh.phi[j + 1] - mesh.phi[j]).exp() * acc;
        du[j] = -acc;
    }
    acc = 0.0;
    for j in 1..mesh.zero {
        let back = (mesh.phi[j - 1] - mesh.phi[j]).exp();
        acc = back * (acc + tilde[j - 1]);
        du[j] = acc;
    }
    // u″ from the equation, then Euler–Maclaurin corrected trapezoid outward from 0.
    let d2u: Vec<f64> = (0..len)
        .map(|j| {
            let t = mesh.x[j];
            (psi_t(t) - b(t) * du[j]) / a(t)
        })
        .collect();
    let mut u = vec![0.0; len];
    let increment = |j: usize, k: usize| {
        let dx = mesh.x[k] - mesh.x[j];
        0.5 * dx * (du[j] + du[k]) - dx * dx / 12.0 * (d2u[k] - d2u[j])
    };
    for j in mesh.zero..len - 1 {
        u[j + 1] = u[j] + increment(j, j + 1);
    }
    for j in (1..=mesh.zero).rev() {
        u[j - 1] = u[j] - increment(j - 1, j);
    }

    // The node x = 0 sits between centers n/2 − 1 and n/2.
    let values: Vec<f64> = (0..n)
        .map(|c| u[mesh.first_center + c + usize::from(c >= n / 2)])
        .collect();
    finish(prob, values, mean, 0.0, "quadrature-1d")
}

/// Normalizes u to zero average on B(0, 2R₀) and fills derivatives and bounds.
pub(crate) fn finish(
    prob: &PoissonProblem,
    mut u: Vec<f64>,
    mean: f64,
    projection: f64,
    method: &'static str,
) -> Result<PoissonSolution> {
    let grid = *prob.grid();
    let d = grid.dim;
    let witness = lyapunov_constants(&prob.a, &prob.b, prob.k, &BoundedBox::symmetric(d, grid.radius))?;
    let radius = (2.0 * witness.r0).max(grid.h());
    let inside: Vec<usize> = (0..grid.len())
        .filter(|&i| crate::fpk::euclid(&grid.center(i), d) < radius)
        .collect();
    let avg = inside.iter().map(|&i| u[i]).sum::<f64>() / inside.len() as f64;
    u.iter_mut().for_each(|v| *v -= avg);
    let (grad, hess) = fd_derivatives(&grid, &u);
    let mut solved = prob.clone();
    solved.mean = mean;
    let residual = pointwise_residual(&solved, &grad, &hess);
    let bounds = growth_bounds(&solved, &grid, &u, &grad, &hess, None);
    Ok(PoissonSolution {
        grid,
        method,
        u,
        grad,
        hess,
        residual,
        mean_subtracted: mean,
        projection,
        witness,
        normalization_radius: radius,
        bounds,
    })
}
