//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by field evaluation, solvers and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression error at byte {pos}: {msg}")]
    Expression { pos: usize, msg: String },

    #[error("unknown example field `{name}`; supported: {supported}")]
    UnknownField { name: String, supported: String },

    #[error("non-finite field value {value} at point {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("condition (H) clause `{clause}` violated at {witness:?}: {detail}")]
    ConditionViolated {
        clause: String,
        witness: Vec<f64>,
        detail: String,
    },

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("confinement failure: {0}")]
    Confinement(String),

    #[error("domain under-truncated: boundary cells carry mass fraction {fraction:.3e}")]
    UnderTruncation { fraction: f64 },

    #[error(
        "linear solve did not converge (final relative residual {final_residual:.3e} after {iterations} iterations)"
    )]
    Convergence {
        final_residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("scheme positivity: clipped negative mass {clipped:.3e} exceeds 1e-6")]
    Positivity { clipped: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate density: {0}")]
    Degenerate(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("incompatible Poisson data: projection magnitude {magnitude:.3e} exceeds {limit:.3e}")]
    Incompatible { magnitude: f64, limit: f64 },

    #[error("test function support (radius {support}) reaches the grid boundary (box radius {box_radius})")]
    Support { support: f64, box_radius: f64 },

    #[error("ellipticity margin: eps * sup|q| = {perturbation} must stay below lambda/2 = {half_lambda}")]
    EllipticityMargin { perturbation: f64, half_lambda: f64 },

    #[error("fixed-point iteration is not contracting; gaps: {gaps:?}")]
    NonContraction { gaps: Vec<f64> },

    #[error("probe pair {index} is coincident (distance {distance:.3e})")]
    CoincidentProbe { index: usize, distance: f64 },

    #[error("at delta = {delta}: {source}")]
    AtDelta {
        delta: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
