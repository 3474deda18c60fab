//! Grid Poisson solver. The discrete generator is the transpose of the
//! finite-volume Kolmogorov operator, which in the interior reads
//!
//!   a_c (u_{c+1} − 2u_c + u_{c−1})/h² + [b_{c+½}(u_{c+1} − u_c) + b_{c−½}(u_c − u_{c−1})]/(2h)
//!
//! (plus the corner-averaged cross terms in d = 2). Its range is the orthogonal
//! complement of the discrete stationary density ρ_h, so ψ̃ is projected by
//! removing ∫ψ̃ρ_h before the solve.

use super::problem::{PoissonProblem, PoissonSolution};
use super::solve1d::finish;
use crate::error::{Error, Result};
use crate::fpk::{fpk_operator, solve_grid_with, SolveOptions};
use crate::sparse::{bicgstab, Ilu0};

/// Projection magnitudes above this multiple of h²·∫|ψ̃|ρ are rejected.
pub const PROJECTION_FACTOR: f64 = 10.0;

pub fn solve_poisson_grid(prob: &PoissonProblem) -> Result<PoissonSolution> {
    solve_poisson_grid_with(prob, &SolveOptions::default())
}

pub fn solve_poisson_grid_with(prob: &PoissonProblem, opts: &SolveOptions) -> Result<PoissonSolution> {
    let grid = *prob.grid();
    let d = grid.dim;
    let kernel_opts = SolveOptions {
        bounded_domain: true,
        strict: false,
        ..*opts
    };
    let rho_h = solve_grid_with(&prob.a, &prob.b, &grid, &kernel_opts)?;
    let vol = grid.cell_volume();
    let psi: Vec<f64> = (0..grid.len()).map(|i| prob.psi_tilde(&grid.center(i)[..d])).collect();
    let projection: f64 = psi.iter().zip(rho_h.values()).map(|(p, r)| p * r).sum::<f64>() * vol;
    let scale_l1: f64 = psi.iter().zip(rho_h.values()).map(|(p, r)| p.abs() * r).sum::<f64>() * vol;
    let limit = PROJECTION_FACTOR * grid.h().powi(2) * scale_l1.max(1e-300);
    if projection.abs() > limit && projection.abs() > 1e-14 {
        return Err(Error::Incompatible {
            magnitude: projection.abs(),
            limit,
        });
    }
    let mut rhs: Vec<f64> = psi.iter().map(|p| p - projection).collect();
    if rhs.iter().all(|v| v.abs() <= 1e-300) {
        return finish(prob, vec![0.0; grid.len()], prob.mean, projection, "grid");
    }

    let mut l = fpk_operator(&prob.a, &prob.b, &grid)?.transpose();
    let scale: Vec<f64> = l
        .diagonal()
        .iter()
        .map(|&v| if v != 0.0 { 1.0 / v.abs() } else { 1.0 })
        .collect();
    l.scale_rows(&scale);
    for (r, s) in rhs.iter_mut().zip(&scale) {
        *r *= s;
    }
    let pin = grid.origin_cell();
    l.set_identity_row(pin);
    rhs[pin] = 0.0;
    let ilu = Ilu0::new(&l)?;
    let mut u = vec![0.0; grid.len()];
    bicgstab(&l, &rhs, &mut u, &ilu, opts.tol, opts.max_iter)?;
    finish(prob, u, prob.mean, projection, "grid")
}
