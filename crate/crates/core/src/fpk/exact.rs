//! Closed-form stationary density in d = 1: ρ(x) = C·exp(Φ(x))/a(x), Φ(x) = ∫₀^x b/a.

use serde::Serialize;

use super::grid::{GridDensity, GridSpec, SolveDiagnostics, BOUNDARY_MASS_LIMIT};
use crate::coeffs::{DriftField, ScalarField};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{cumulative_from_zero, GaussLegendre};

/// Gauss–Legendre order and panels per cell for the cumulative integral of b/a.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub order: usize,
    pub panels_per_cell: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            order: 8,
            panels_per_cell: 1,
        }
    }
}

/// Φ(x) = ∫₀^x b/a at each point of the increasing sequence `xs`.
pub(crate) fn potential(a: &ScalarField, b: &DriftField, xs: &[f64], quad: QuadratureSpec) -> Result<Vec<f64>> {
    let rule = GaussLegendre::new(quad.order);
    let mut bad: Option<(f64, f64)> = None;
    let phi = cumulative_from_zero(&rule, xs, quad.panels_per_cell, |t| {
        let av = a.eval(&[t]);
        if !(av > 0.0) && bad.is_none() {
            bad = Some((t, av));
        }
        b.components()[0].eval(&[t]) / av
    });
    if let Some((t, av)) = bad {
        return Err(Error::Ellipticity(format!("a({t}) = {av} is not positive")));
    }
    if let Some(k) = phi.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            point: vec![xs[k]],
            value: phi[k],
        });
    }
    Ok(phi)
}

fn check_inputs(a: &ScalarField, b: &DriftField, grid: &GridSpec) -> Result<()> {
    if grid.dim != 1 || a.dim() != 1 || b.dim() != 1 {
        return invalid("the exact solver is one-dimensional");
    }
    Ok(())
}

/// Stationary density on the truncated line. The truncation is validated:
/// the density must decay toward both ends and leave less than 10⁻⁴ of its
/// mass in the boundary cells.
pub fn solve_exact_1d(a: &ScalarField, b: &DriftField, grid: &GridSpec, quad: QuadratureSpec) -> Result<GridDensity> {
    solve_exact(a, b, grid, quad, true)
}

/// Stationary density of the process reflected at ±R (the box is the domain).
pub fn solve_exact_1d_bounded(
    a: &ScalarField,
    b: &DriftField,
    grid: &GridSpec,
    quad: QuadratureSpec,
) -> Result<GridDensity> {
    solve_exact(a, b, grid, quad, false)
}

fn solve_exact(
    a: &ScalarField,
    b: &DriftField,
    grid: &GridSpec,
    quad: QuadratureSpec,
    truncated: bool,
) -> Result<GridDensity> {
    check_inputs(a, b, grid)?;
    let n = grid.cells;
    let xs: Vec<f64> = (0..n).map(|c| grid.coord(c)).collect();
    let phi = potential(a, b, &xs, quad)?;
    let avals: Vec<f64> = xs.iter().map(|&x| a.eval(&[x])).collect();
    if let Some(c) = avals.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Ellipticity(format!(
            "a({}) = {} is not positive",
            xs[c], avals[c]
        )));
    }
    let (argmax, &pmax) = phi.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap();
    if truncated {
        if pmax > 700.0 {
            return Err(Error::Confinement(format!(
                "exp(Φ) overflows: Φ reaches {pmax:.3e} at x = {}",
                xs[argmax]
            )));
        }
        if argmax == 0 || argmax == n - 1 {
            return Err(Error::Confinement(format!(
                "density increases toward the truncation boundary (maximum at x = {})",
                xs[argmax]
            )));
        }
    }
    let values: Vec<f64> = phi.iter().zip(&avals).map(|(p, av)| (p - pmax).exp() / av).collect();
    let rho = GridDensity::from_values(*grid, values)?;
    let boundary_mass = rho.boundary_mass();
    if truncated && boundary_mass >= BOUNDARY_MASS_LIMIT {
        return Err(Error::UnderTruncation {
            fraction: boundary_mass,
        });
    }
    Ok(rho.with_diagnostics(SolveDiagnostics {
        method: "exact-1d".into(),
        boundary_mass,
        ..Default::default()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{DriftBounds, Smoothness};

    #[test]
    fn standard_gaussian_peak() {
        let g = GridSpec::new(1, 8.0, 1024).unwrap();
        let rho = solve_exact_1d(
            &ScalarField::constant(1, 1.0),
            &DriftField::ou(1, 1.0),
            &g,
            QuadratureSpec::default(),
        )
        .unwrap();
        let peak = rho.interpolate(&[0.0]);
        // interpolation between ±h/2 slightly undershoots the peak
        let h = g.h();
        let expected = (-(h * h) / 8.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((peak - expected).abs() < 1e-10, "{peak} vs {expected}");
    }

    #[test]
    fn expanding_drift_is_unconfined() {
        let b = DriftField::new(
            1,
            vec![ScalarField::from_fn(1, Smoothness::Smooth, |x| x[0])],
            DriftBounds {
                beta: 1.0,
                beta1: 1.0,
                beta2: 1.0,
                beta3: 1.0,
            },
        )
        .unwrap();
        let g = GridSpec::new(1, 8.0, 64).unwrap();
        let err = solve_exact_1d(&ScalarField::constant(1, 1.0), &b, &g, QuadratureSpec::default());
        assert!(matches!(err, Err(Error::Confinement(_))));
    }

    #[test]
    fn nonpositive_diffusion_is_rejected() {
        let a = ScalarField::from_fn(1, Smoothness::Smooth, |x| x[0]);
        let g = GridSpec::new(1, 4.0, 64).unwrap();
        let err = solve_exact_1d(&a, &DriftField::ou(1, 1.0), &g, QuadratureSpec::default());
        assert!(matches!(err, Err(Error::Ellipticity(_))));
    }
}
