//! Convolution with the standard bump kernel g(z) = c·exp(−1/(1−|z|²)), |z| < 1.

use serde::Serialize;

use super::field::{FieldRule, ScalarField, Smoothness};
use super::modulus::BoundedBox;
use crate::error::{invalid, Result};
use crate::quadrature::GaussLegendre;

/// Default number of midpoint nodes per axis (radial nodes in d = 2).
pub const DEFAULT_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MollifierSpec {
    pub dim: usize,
    pub scale: f64,
    pub nodes: usize,
    /// c with ∫ g = 1.
    pub normalization: f64,
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// ∫_{|z|<1} exp(−1/(1−|z|²)) dz by composite Gauss–Legendre in the radius.
fn bump_mass(dim: usize) -> f64 {
    let gl = GaussLegendre::new(20);
    match dim {
        1 => 2.0 * gl.integrate_composite(0.0, 1.0, 64, |t| bump(t * t)),
        _ => std::f64::consts::TAU * gl.integrate_composite(0.0, 1.0, 64, |t| bump(t * t) * t),
    }
}

impl MollifierSpec {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        Self::with_nodes(dim, scale, DEFAULT_NODES)
    }

    pub fn with_nodes(dim: usize, scale: f64, nodes: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid(format!("dimension {dim} not supported"));
        }
        if !(scale > 0.0 && scale.is_finite()) || nodes < 2 {
            return invalid("mollifier needs scale > 0 and at least 2 nodes");
        }
        Ok(Self {
            dim,
            scale,
            nodes,
            normalization: 1.0 / bump_mass(dim),
        })
    }

    /// Unit-scale kernel g(z).
    pub fn kernel(&self, z: &[f64]) -> f64 {
        let r2: f64 = z[..self.dim].iter().map(|t| t * t).sum();
        self.normalization * bump(r2)
    }

    /// Scaled kernel g_ε(z) = ε^{-d} g(z/ε).
    pub fn scaled_kernel(&self, z: &[f64]) -> f64 {
        let mut u = [0.0; 2];
        for i in 0..self.dim {
            u[i] = z[i] / self.scale;
        }
        self.kernel(&u[..self.dim]) / self.scale.powi(self.dim as i32)
    }

    /// |∫ g − 1| by an independent midpoint rule on a fine Cartesian grid.
    pub fn normalization_error(&self) -> f64 {
        let m = 2000;
        let h = 2.0 / m as f64;
        let mass = if self.dim == 1 {
            (0..m)
                .map(|i| self.kernel(&[-1.0 + (i as f64 + 0.5) * h]) * h)
                .sum::<f64>()
        } else {
            let mut s = 0.0;
            for j in 0..m {
                let y = -1.0 + (j as f64 + 0.5) * h;
                for i in 0..m {
                    let x = -1.0 + (i as f64 + 0.5) * h;
                    s += self.kernel(&[x, y]);
                }
            }
            s * h * h
        };
        (mass - 1.0).abs()
    }

    /// Quadrature offsets (scaled by ε) and weights summing to 1. The node set
    /// is symmetric under z ↦ −z.
    pub fn nodes(&self) -> (Vec<[f64; 2]>, Vec<f64>) {
        let m = self.nodes;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        if self.dim == 1 {
            for j in 0..m {
                let z = -1.0 + (2 * j + 1) as f64 / m as f64;
                offsets.push([self.scale * z, 0.0]);
                weights.push(bump(z * z));
            }
        } else {
            let angles = 4 * m;
            for i in 0..m {
                let rho = (i as f64 + 0.5) / m as f64;
                let g = bump(rho * rho) * rho;
                for j in 0..angles {
                    let th = (j as f64 + 0.5) * std::f64::consts::TAU / angles as f64;
                    offsets.push([self.scale * rho * th.cos(), self.scale * rho * th.sin()]);
                    weights.push(g);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        (offsets, weights)
    }
}

/// x ↦ ∫ f(x − z) g_ε(z) dz.
pub fn mollify(f: &ScalarField, m: &MollifierSpec) -> Result<ScalarField> {
    if f.dim() != m.dim {
        return invalid(format!("field dimension {} != mollifier dimension {}", f.dim(), m.dim));
    }
    let (offsets, weights) = m.nodes();
    Ok(ScalarField::new(
        f.dim(),
        FieldRule::Mollified {
            inner: f.clone(),
            offsets,
            weights,
        },
        Smoothness::Smooth,
    ))
}

/// max |f(x) − g(x)| over a uniform lattice with `per_axis` points per axis in `region`.
pub fn sup_gap(f: &ScalarField, g: &ScalarField, region: &BoundedBox, per_axis: usize) -> f64 {
    let d = region.dim;
    let coord = |axis: usize, i: usize| {
        region.lo[axis] + (region.hi[axis] - region.lo[axis]) * i as f64 / (per_axis - 1) as f64
    };
    let count = per_axis.pow(d as u32);
    (0..count)
        .map(|idx| {
            let x = [coord(0, idx % per_axis), coord(1.min(d - 1), idx / per_axis)];
            (f.eval(&x[..d]) - g.eval(&x[..d])).abs()
        })
        .fold(0.0, f64::max)
}
