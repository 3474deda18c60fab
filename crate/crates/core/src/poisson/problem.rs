use serde::Serialize;

use super::lyapunov::LyapunovWitness;
use crate::coeffs::{DiffusionMatrixField, DriftField, ScalarField};
use crate::error::{invalid, Error, Result};
use crate::fpk::{euclid, GridDensity, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Solve with ψ̃ = ψ − ∫ψρ dx.
    Density,
    /// Solve with ψ as given.
    None,
}

/// L_{A,b}u = ψ̃ with reference density ρ.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub a: DiffusionMatrixField,
    pub b: DriftField,
    pub psi: ScalarField,
    pub k: f64,
    pub p: f64,
    s: Option<f64>,
    pub rho: GridDensity,
    pub centering: Centering,
    /// Constant subtracted from ψ (∫ψρ dx by cell quadrature, or 0).
    pub mean: f64,
}

impl PoissonProblem {
    /// p defaults to 2d and s to (2β + k)p + d + 1.
    pub fn new(a: DiffusionMatrixField, b: DriftField, psi: ScalarField, k: f64, rho: GridDensity) -> Result<Self> {
        let d = rho.dim();
        if a.dim() != d || b.dim() != d || psi.dim() != d {
            return invalid("coefficients, ψ and density must share the dimension");
        }
        if !(k >= 1.0) {
            return invalid(format!("weight order k = {k} must be >= 1"));
        }
        let mut growth: f64 = 0.0;
        for (x, _) in rho.cells() {
            let v = psi.eval(&x[..d]);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    point: x[..d].to_vec(),
                    value: v,
                });
            }
            growth = growth.max(v.abs() / (1.0 + euclid(&x, d).powf(k)));
        }
        if !growth.is_finite() {
            return invalid("sup |psi|/(1+|x|^k) is not finite on the grid");
        }
        let mean = if psi.is_constant_in(0..d) {
            psi.eval(&[0.0; 2][..d])
        } else {
            rho.integrate(|x| psi.eval(x))
        };
        Ok(Self {
            a,
            b,
            psi,
            k,
            p: 2.0 * d as f64,
            s: None,
            rho,
            centering: Centering::Density,
            mean,
        })
    }

    pub fn with_p(mut self, p: f64) -> Result<Self> {
        if !(p > self.rho.dim() as f64) || !p.is_finite() {
            return invalid(format!("integrability exponent p = {p} must exceed d"));
        }
        self.p = p;
        Ok(self)
    }

    pub fn with_s(mut self, s: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return invalid(format!("weight exponent s = {s} must be >= 0"));
        }
        self.s = Some(s);
        Ok(self)
    }

    /// Keeps ψ as given (no centering).
    pub fn uncentered(mut self) -> Self {
        self.centering = Centering::None;
        self.mean = 0.0;
        self
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.rho.grid
    }

    pub fn beta(&self) -> f64 {
        self.b.bounds().beta
    }

    pub fn s(&self) -> f64 {
        self.s
            .unwrap_or_else(|| (2.0 * self.beta() + self.k) * self.p + self.dim() as f64 + 1.0)
    }

    pub fn psi_tilde(&self, x: &[f64]) -> f64 {
        self.psi.eval(x) - self.mean
    }

    /// |∫ψ̃ρ dx| by cell quadrature.
    pub fn centering_defect(&self) -> f64 {
        self.rho.integrate(|x| self.psi_tilde(x)).abs()
    }
}

/// Grid solution of L_{A,b}u = ψ̃ with its finite-difference derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonSolution {
    pub grid: GridSpec,
    pub method: &'static str,
    pub u: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// (∂11 u, ∂12 u, ∂22 u); only the first entry is used in d = 1.
    pub hess: Vec<[f64; 3]>,
    /// L_{A,b}u − ψ̃ with the stored derivatives.
    pub residual: Vec<f64>,
    /// Constant actually subtracted from ψ by the solver.
    pub mean_subtracted: f64,
    /// Grid solver: ∫ψ̃ρ_h over the discrete kernel ρ_h, removed before solving.
    pub projection: f64,
    pub witness: LyapunovWitness,
    /// Radius of the ball on which u averages to zero (2R₀, at least one cell).
    pub normalization_radius: f64,
    pub bounds: GrowthBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBounds {
    pub k: f64,
    pub beta: f64,
    pub p: f64,
    pub s: f64,
    /// Ψ = sup |ψ̃|/(1+|x|^k).
    pub psi_sup: f64,
    /// G₀ = sup |u|/(1+|x|^k).
    pub g0: f64,
    /// G₁ = sup |∇u|/(1+|x|^{k+β}).
    pub g1: f64,
    /// H = (∫ |D²u|^p/(1+|x|^s) dx)^{1/p}, Frobenius norm of D²u.
    pub h: f64,
}

impl GrowthBounds {
    pub fn quotients(&self) -> [f64; 3] {
        let q = |v: f64| if self.psi_sup > 0.0 { v / self.psi_sup } else { 0.0 };
        [q(self.g0), q(self.g1), q(self.h)]
    }
}
