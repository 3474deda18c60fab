//! Named coefficient pairs (A, b) and Poisson right-hand sides used by the
//! command line tool and the test suites.

use std::collections::BTreeMap;

use crate::coeffs::{make_example_field, DiffusionMatrixField, DriftField, ScalarField, Smoothness, Sym2};
use crate::error::{invalid, Result};

pub const MODEL_NAMES: [&str; 7] = [
    "ou-1d",
    "ou-2d",
    "ou-anisotropic-2d",
    "weierstrass-ou-1d",
    "log-modulus-ou-1d",
    "polynomial-1d",
    "polynomial-2d",
];

#[derive(Debug, Clone)]
pub struct Model {
    pub name: &'static str,
    pub a: DiffusionMatrixField,
    pub b: DriftField,
    /// Box radius on which the density is negligible at the boundary.
    pub radius: f64,
}

impl Model {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Builds the named model.
///
/// | name                 | A                                   | b                       |
/// |----------------------|-------------------------------------|-------------------------|
/// | `ou-1d`, `ou-2d`     | I                                   | −x                      |
/// | `ou-anisotropic-2d`  | [[1.5, 0.5], [0.5, 1]]              | −x                      |
/// | `weierstrass-ou-1d`  | Weierstrass series, α = ½, λ = ½    | −x                      |
/// | `log-modulus-ou-1d`  | 1 + ½·\|ln\|x\|\|^(−½) near 0       | −x                      |
/// | `polynomial-1d/2d`   | I                                   | −\|x\|²x + ½·tanh(x)    |
pub fn builtin_model(name: &str) -> Result<Model> {
    let (a, b) = match name {
        "ou-1d" => (DiffusionMatrixField::identity(1), DriftField::ou(1, 1.0)),
        "ou-2d" => (DiffusionMatrixField::identity(2), DriftField::ou(2, 1.0)),
        "ou-anisotropic-2d" => (
            DiffusionMatrixField::constant(
                2,
                Sym2 {
                    a11: 1.5,
                    a12: 0.5,
                    a22: 1.0,
                },
            )?,
            DriftField::ou(2, 1.0),
        ),
        "weierstrass-ou-1d" => {
            let f =
                make_example_field("weierstrass-holder", &params(&[("alpha", 0.5), ("lambda", 0.5)]))?.into_scalar()?;
            (DiffusionMatrixField::scalar(f, 0.5)?, DriftField::ou(1, 1.0))
        }
        "log-modulus-ou-1d" => {
            let f = make_example_field(
                "log-modulus",
                &params(&[("gamma", 0.5), ("offset", 1.0), ("amplitude", 0.5)]),
            )?
            .into_scalar()?;
            (DiffusionMatrixField::scalar(f, 0.6)?, DriftField::ou(1, 1.0))
        }
        "polynomial-1d" | "polynomial-2d" => {
            let d = if name == "polynomial-1d" { 1.0 } else { 2.0 };
            let b = make_example_field(
                "polynomial-confining-drift",
                &params(&[("d", d), ("beta", 3.0), ("v", 0.5)]),
            )?
            .into_drift()?;
            (DiffusionMatrixField::identity(d as usize), b)
        }
        other => {
            return invalid(format!(
                "unknown model `{other}` (available: {})",
                MODEL_NAMES.join(", ")
            ))
        }
    };
    Ok(Model {
        name: MODEL_NAMES.iter().copied().find(|n| *n == name).unwrap_or("custom"),
        radius: if name.starts_with("polynomial") { 4.0 } else { 8.0 },
        a,
        b,
    })
}

pub fn builtin_models() -> Vec<Model> {
    MODEL_NAMES
        .iter()
        .map(|n| builtin_model(n).expect("built-in models are valid"))
        .collect()
}

pub const POISSON_NAMES: [&str; 5] = [
    "ou-tanh-1d",
    "weierstrass-tanh-1d",
    "polynomial-tanh-1d",
    "ou-sine-1d",
    "ou-tanh-2d",
];

#[derive(Debug, Clone)]
pub struct PoissonCase {
    pub name: &'static str,
    pub model: Model,
    pub psi: ScalarField,
}

/// Named right-hand sides ψ, all bounded so that every k ≥ 1 applies.
pub fn builtin_poisson(name: &str) -> Result<PoissonCase> {
    let tanh_shift = |d: usize| ScalarField::from_fn(d, Smoothness::Smooth, |x| x[0].tanh() + 0.3);
    let (model, psi) = match name {
        "ou-tanh-1d" => ("ou-1d", tanh_shift(1)),
        "weierstrass-tanh-1d" => ("weierstrass-ou-1d", tanh_shift(1)),
        "polynomial-tanh-1d" => ("polynomial-1d", tanh_shift(1)),
        "ou-sine-1d" => (
            "ou-1d",
            ScalarField::from_fn(1, Smoothness::Smooth, |x| (2.0 * x[0]).sin()),
        ),
        "ou-tanh-2d" => (
            "ou-2d",
            ScalarField::from_fn(2, Smoothness::Smooth, |x| x[0].tanh() + 0.5 * x[1].sin()),
        ),
        other => {
            return invalid(format!(
                "unknown Poisson problem `{other}` (available: {})",
                POISSON_NAMES.join(", ")
            ))
        }
    };
    Ok(PoissonCase {
        name: POISSON_NAMES.iter().copied().find(|n| *n == name).unwrap_or("custom"),
        model: builtin_model(model)?,
        psi,
    })
}

pub fn builtin_poisson_cases() -> Vec<PoissonCase> {
    POISSON_NAMES
        .iter()
        .map(|n| builtin_poisson(n).expect("built-in problems are valid"))
        .collect()
}
