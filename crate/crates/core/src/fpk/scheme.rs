//! Finite-volume discretization of ∂i∂j(a^{ij}ρ) − ∂i(b^iρ) = 0.
//!
//! The flux through a face is F^i = ∂j(a^{ij}ρ) − b^iρ with a^{ij}ρ sampled at
//! cell centers and b at the face midpoint:
//!
//!   F¹_{i+½,j} = (w¹¹_{i+1,j} − w¹¹_{i,j})/h
//!              + (w¹²_{i,j+1} + w¹²_{i+1,j+1} − w¹²_{i,j−1} − w¹²_{i+1,j−1})/(4h)
//!              − b¹(x_{i+½,j})(ρ_{i,j} + ρ_{i+1,j})/2,     w^{kl} = a^{kl}ρ,
//!
//! and symmetrically for F². Cross differences that would leave the box reuse the
//! boundary row (mirrored ghost cells). Boundary faces carry no flux, so the columns
//! of the assembled matrix sum to zero.

use serde::Serialize;

use super::grid::{GridDensity, GridSpec, SolveDiagnostics, BOUNDARY_MASS_LIMIT};
use crate::coeffs::{DiffusionMatrixField, DriftField};
use crate::error::{invalid, Error, Result};
use crate::sparse::{bicgstab, CsrMatrix, Ilu0};

/// Clipped mass above which the scheme-positivity warning is raised.
pub const CLIP_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Relative residual target of the row-equilibrated system.
    pub tol: f64,
    pub max_iter: usize,
    /// Escalates the scheme-positivity warning to an error.
    pub strict: bool,
    /// Treat the box as the domain: skip the under-truncation check.
    pub bounded_domain: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            strict: false,
            bounded_domain: false,
        }
    }
}

/// Matrix M with (Mρ)_c = cell average of ∂i∂j(a^{ij}ρ) − ∂i(b^iρ).
pub fn fpk_operator(a: &DiffusionMatrixField, b: &DriftField, grid: &GridSpec) -> Result<CsrMatrix> {
    let d = grid.dim;
    if a.dim() != d || b.dim() != d {
        return invalid("coefficient and grid dimensions differ");
    }
    let n = grid.cells;
    let h = grid.h();
    let len = grid.len();
    let mut diag = vec![[0.0; 3]; len];
    for (idx, slot) in diag.iter_mut().enumerate() {
        let x = grid.center(idx);
        let m = a.at(&x[..d]);
        for (k, v) in [m.a11, m.a12, m.a22].into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    point: x[..d].to_vec(),
                    value: v,
                });
            }
            slot[k] = v;
        }
    }
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(len * if d == 1 { 3 } else { 9 });
    for r in 0..len {
        trip.push((r, r, 0.0));
    }
    let mut push_face = |left: usize, right: usize, coeffs: &[(usize, f64)]| {
        for &(cell, c) in coeffs {
            trip.push((left, cell, c / h));
            trip.push((right, cell, -c / h));
        }
    };
    let rows = if d == 1 { 1 } else { n };
    for axis in 0..d {
        // `along` runs in the flux direction, `across` over the other axis.
        for across in 0..rows {
            for along in 0..n - 1 {
                let at = |s: usize, t: usize| {
                    if axis == 0 {
                        grid.index(s, t)
                    } else {
                        grid.index(t, s)
                    }
                };
                let left = at(along, across);
                let right = at(along + 1, across);
                let mut xf = grid.center(left);
                xf[axis] += 0.5 * h;
                let bf = b.components()[axis].eval(&xf[..d]);
                if !bf.is_finite() {
                    return Err(Error::NonFinite {
                        point: xf[..d].to_vec(),
                        value: bf,
                    });
                }
                let principal = if axis == 0 { 0 } else { 2 };
                let mut coeffs = vec![
                    (right, diag[right][principal] / h - 0.5 * bf),
                    (left, -diag[left][principal] / h - 0.5 * bf),
                ];
                if d == 2 {
                    let up = (across + 1).min(n - 1);
                    let down = across.saturating_sub(1);
                    for s in [along, along + 1] {
                        let cu = at(s, up);
                        let cd = at(s, down);
                        coeffs.push((cu, diag[cu][1] / (4.0 * h)));
                        coeffs.push((cd, -diag[cd][1] / (4.0 * h)));
                    }
                }
                push_face(left, right, &coeffs);
            }
        }
    }
    Ok(CsrMatrix::from_triplets(len, trip))
}

/// Stationary probability density on the grid with default options.
pub fn solve_grid(a: &DiffusionMatrixField, b: &DriftField, grid: &GridSpec) -> Result<GridDensity> {
    solve_grid_with(a, b, grid, &SolveOptions::default())
}

pub fn solve_grid_with(
    a: &DiffusionMatrixField,
    b: &DriftField,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<GridDensity> {
    let guess = if grid.dim == 2 && grid.cells >= 64 {
        let coarse = GridSpec::new(2, grid.radius, grid.cells / 2)?;
        let coarse_opts = SolveOptions {
            strict: false,
            bounded_domain: true,
            ..*opts
        };
        match solve_grid_with(a, b, &coarse, &coarse_opts) {
            Ok(rho) => Some(
                (0..grid.len())
                    .map(|i| rho.interpolate(&grid.center(i)))
                    .collect::<Vec<f64>>(),
            ),
            Err(_) => None,
        }
    } else {
        None
    };
    let mut m = fpk_operator(a, b, grid)?;
    let len = grid.len();
    let scale: Vec<f64> = m
        .diagonal()
        .iter()
        .map(|&v| if v != 0.0 { 1.0 / v.abs() } else { 1.0 })
        .collect();
    m.scale_rows(&scale);
    let pin = grid.origin_cell();
    m.set_identity_row(pin);
    let mut rhs = vec![0.0; len];
    rhs[pin] = 1.0;
    let mut x = match guess {
        Some(g) if g[pin] > 0.0 => g.iter().map(|v| v / g[pin]).collect(),
        _ => rhs.clone(),
    };
    let ilu = Ilu0::new(&m)?;
    let stats = bicgstab(&m, &rhs, &mut x, &ilu, opts.tol, opts.max_iter)?;

    let vol = grid.cell_volume();
    let mass: f64 = x.iter().sum::<f64>() * vol;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::Degenerate(format!("discrete kernel has mass {mass}")));
    }
    let mut clipped = 0.0;
    for v in x.iter_mut() {
        *v /= mass;
        if *v < 0.0 {
            clipped += -*v * vol;
            *v = 0.0;
        }
    }
    let mut warnings = Vec::new();
    if clipped > CLIP_WARN {
        if opts.strict {
            return Err(Error::Positivity { clipped });
        }
        warnings.push(format!("scheme positivity: clipped negative mass {clipped:.3e}"));
    }
    let rho = GridDensity::from_values(*grid, x)?;
    let boundary_mass = rho.boundary_mass();
    if !opts.bounded_domain && boundary_mass >= BOUNDARY_MASS_LIMIT {
        return Err(Error::UnderTruncation {
            fraction: boundary_mass,
        });
    }
    Ok(rho.with_diagnostics(SolveDiagnostics {
        method: "grid".into(),
        clipped_mass: clipped,
        boundary_mass,
        iterations: stats.iterations,
        final_residual: stats.final_residual,
        residual_history: stats.history,
        warnings,
    }))
}
