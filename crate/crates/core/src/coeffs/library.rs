//! Built-in coefficient fields.
//!
//! | name                          | closed form                                                  |
//! |-------------------------------|--------------------------------------------------------------|
//! | `constant`                    | f ≡ c                                                        |
//! | `log-modulus`                 | offset + amplitude·|ln|x||^(-γ) on 0<|x|≤1/2, 0 at x=0, flat outside |
//! | `weierstrass-holder`          | (λ+1/λ)/2 + (1/λ−λ)/2 · mean_i w(x_i), w a 24-term lacunary cosine series |
//! | `ou-drift`                    | b(x) = −θx                                                   |
//! | `polynomial-confining-drift`  | b(x) = −|x|^(β−1)x + v·tanh(x) (componentwise)               |

use std::collections::BTreeMap;

use super::field::{DriftBounds, DriftField, FieldRule, ScalarField, Smoothness};
use crate::error::{invalid, Error, Result};

pub const SUPPORTED: [&str; 5] = [
    "log-modulus",
    "weierstrass-holder",
    "ou-drift",
    "polynomial-confining-drift",
    "constant",
];

/// Number of cosine terms kept in the lacunary series.
pub const WEIERSTRASS_TERMS: usize = 24;

#[derive(Debug, Clone)]
pub enum ExampleField {
    Scalar(ScalarField),
    Drift(DriftField),
}

impl ExampleField {
    pub fn into_scalar(self) -> Result<ScalarField> {
        match self {
            ExampleField::Scalar(f) => Ok(f),
            ExampleField::Drift(_) => invalid("expected a scalar field, got a drift"),
        }
    }

    pub fn into_drift(self) -> Result<DriftField> {
        match self {
            ExampleField::Drift(b) => Ok(b),
            ExampleField::Scalar(_) => invalid("expected a drift, got a scalar field"),
        }
    }
}

struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
    allowed: &'static [&'static str],
}

impl Params<'_> {
    fn check(&self, name: &str) -> Result<()> {
        for key in self.map.keys() {
            if key != "d" && !self.allowed.contains(&key.as_str()) {
                return invalid(format!(
                    "parameter `{key}` not accepted by `{name}` (allowed: d, {})",
                    self.allowed.join(", ")
                ));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.map.get(key).copied().unwrap_or(default)
    }

    fn dim(&self) -> Result<usize> {
        let d = self.get("d", 1.0);
        if d == 1.0 || d == 2.0 {
            Ok(d as usize)
        } else {
            invalid(format!("d = {d} not supported (d in {{1,2}})"))
        }
    }
}

pub fn make_example_field(name: &str, params: &BTreeMap<String, f64>) -> Result<ExampleField> {
    let allowed: &'static [&'static str] = match name {
        "constant" => &["c"],
        "log-modulus" => &["gamma", "offset", "amplitude"],
        "weierstrass-holder" => &["alpha", "lambda", "base"],
        "ou-drift" => &["theta", "beta1"],
        "polynomial-confining-drift" => &["beta", "v"],
        _ => {
            return Err(Error::UnknownField {
                name: name.to_string(),
                supported: SUPPORTED.join(", "),
            })
        }
    };
    let p = Params { map: params, allowed };
    p.check(name)?;
    let d = p.dim()?;
    match name {
        "constant" => Ok(ExampleField::Scalar(ScalarField::constant(d, p.get("c", 1.0)))),
        "log-modulus" => {
            let gamma = p.get("gamma", 0.5);
            if !(gamma > 0.0 && gamma < 1.0) {
                return invalid(format!("log-modulus needs 0 < gamma < 1, got {gamma}"));
            }
            Ok(ExampleField::Scalar(ScalarField::new(
                d,
                FieldRule::LogModulus {
                    gamma,
                    offset: p.get("offset", 0.0),
                    amplitude: p.get("amplitude", 1.0),
                },
                Smoothness::DiniLog(gamma),
            )))
        }
        "weierstrass-holder" => {
            let alpha = p.get("alpha", 0.5);
            let lambda = p.get("lambda", 0.5);
            let base = p.get("base", 2.0);
            if !(alpha > 0.0 && alpha < 1.0) || !(lambda > 0.0 && lambda < 1.0) || base < 2.0 {
                return invalid("weierstrass-holder needs 0 < alpha < 1, 0 < lambda < 1, base >= 2");
            }
            Ok(ExampleField::Scalar(ScalarField::new(
                d,
                FieldRule::Weierstrass {
                    alpha,
                    base,
                    terms: WEIERSTRASS_TERMS,
                    mid: 0.5 * (lambda + 1.0 / lambda),
                    amp: 0.5 * (1.0 / lambda - lambda),
                },
                Smoothness::Holder(alpha),
            )))
        }
        "ou-drift" => {
            let theta = p.get("theta", 1.0);
            if theta <= 0.0 {
                return invalid("ou-drift needs theta > 0");
            }
            let b = DriftField::ou(d, theta);
            let bounds = DriftBounds {
                beta1: p.get("beta1", 1.0),
                ..b.bounds()
            };
            Ok(ExampleField::Drift(DriftField::new(
                d,
                b.components().to_vec(),
                bounds,
            )?))
        }
        "polynomial-confining-drift" => {
            let beta = p.get("beta", 3.0);
            let v = p.get("v", 0.0);
            if beta < 1.0 {
                return invalid("polynomial-confining-drift needs beta >= 1");
            }
            let components = (0..d)
                .map(|i| {
                    ScalarField::from_fn(d, Smoothness::Smooth, move |x| {
                        let r = x[..d].iter().map(|t| t * t).sum::<f64>().sqrt();
                        -r.powf(beta - 1.0) * x[i] + v * x[i].tanh()
                    })
                })
                .collect();
            let vmax = v.abs() * (d as f64).sqrt();
            let bounds = DriftBounds {
                beta,
                beta1: confinement_offset(beta, vmax),
                beta2: 1.0,
                beta3: 1.0 + vmax,
            };
            Ok(ExampleField::Drift(DriftField::new(d, components, bounds)?))
        }
        _ => unreachable!(),
    }
}

/// Smallest β₁ (plus a small margin) with t² − t^(β+1) + v·t ≤ β₁ for all t ≥ 0.
fn confinement_offset(beta: f64, v: f64) -> f64 {
    let g = |t: f64| t * t - t.powf(beta + 1.0) + v * t;
    // g is eventually decreasing; its maximizer lies below max(2, 1 + v).
    let upper = 2.0 + v;
    let samples = 20_000;
    let max = (0..=samples)
        .map(|i| g(upper * i as f64 / samples as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    max.max(0.0) * 1.01 + 1e-3
}
