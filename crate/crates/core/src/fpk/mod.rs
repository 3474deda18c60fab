//! Stationary probability solutions of ∂i∂j(a^{ij}ρ) − ∂i(b^iρ) = 0 on a truncated
//! box, together with moments, weighted norms and Harnack ratios.

mod diagnostics;
mod exact;
mod grid;
mod scheme;

pub use diagnostics::{
    generator, harnack_ratio, moment, moment_report, weak_form_check, weak_form_check_grid, weak_residual,
    weighted_lp_norm, weighted_sup_norm, MomentReport, WeakFormEntry, WeakFormReport, WEAK_FORM_LEVELS,
};
pub use exact::{solve_exact_1d, solve_exact_1d_bounded, QuadratureSpec};
pub(crate) use grid::euclid;
pub use grid::{BoundaryRule, GridDensity, GridSpec, SolveDiagnostics, BOUNDARY_MASS_LIMIT, MASS_TOL};
pub use scheme::{fpk_operator, solve_grid, solve_grid_with, SolveOptions, CLIP_WARN};
