//! Numerical toolkit for stationary Kolmogorov (Fokker–Planck–Kolmogorov) equations
//! ∂i∂j(a^{ij}ρ) − ∂i(b^iρ) = 0 with Dini mean oscillation diffusion coefficients.

pub mod coeffs;
pub mod error;
pub mod expr;
pub mod fpk;
pub mod meanfield;
pub mod models;
pub mod poisson;
pub mod quadrature;
pub mod sparse;
pub mod stability;
pub mod testfn;

pub use error::{Error, Result};
