//! The equation L_{A,b}u = ψ − ∫ψρ dx with L_{A,b}u = a^{ij}∂i∂ju + b^i∂iu: a
//! quadrature solver in d = 1, a grid solver in d ≤ 2, growth bounds of the
//! solution and the Lyapunov constants of V(x) = 1 + |x|^{2k}.

mod bounds;
mod lyapunov;
mod problem;
mod solve1d;
mod solve_grid;

pub use bounds::{
    interior_max, interior_residual, residual_fourth_order_1d, verify_growth_bounds, GrowthReport, RadiusQuotients,
};
pub use lyapunov::{
    lyapunov_constants, lyapunov_constants_from_params, lyapunov_generator, LyapunovWitness, WitnessSource, RADIUS_STEP,
};
pub use problem::{Centering, GrowthBounds, PoissonProblem, PoissonSolution};
pub use solve1d::{solve_poisson_1d, TAIL_TOL};
pub use solve_grid::{solve_poisson_grid, solve_poisson_grid_with, PROJECTION_FACTOR};
