//! Coefficient fields (A, b), oscillation moduli, mollification and Condition (H).

mod condition;
mod field;
mod library;
mod modulus;
mod mollify;

pub use condition::{
    check_condition_h, condition_points, default_modulus_radii, ClauseVerdict, ConditionHParams, EntryModulus,
    LATTICE_SPACING, SAMPLE_TOL,
};
pub use field::{
    DiffusionMatrixField, DriftBounds, DriftField, FieldFn, FieldRule, GridSamples, ScalarField, Smoothness, Sym2,
};
pub use library::{make_example_field, ExampleField, SUPPORTED, WEIERSTRASS_TERMS};
pub use modulus::{
    dini_integral, dini_mean_oscillation, log_radii, BoundedBox, DiniEstimate, OscillationModulus, SamplingSpec,
    TailModel,
};
pub use mollify::{mollify, sup_gap, MollifierSpec};
