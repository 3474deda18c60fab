//! `poisson`: solution of L u = ψ − ∫ψρ with growth-bound quotients and the
//! Lyapunov witness (M₀, R₀).

use serde::Serialize;

use fpk_core::fpk::solve_grid_with;
use fpk_core::poisson::{
    interior_residual, solve_poisson_1d, solve_poisson_grid_with, verify_growth_bounds, Centering, GrowthReport,
    LyapunovWitness, PoissonProblem,
};

use super::num;
use crate::config::PoissonMethod;
use crate::error::CliError;
use crate::output::{Cell, OutputDir};
use crate::report::RunReport;
use crate::svg::{line_plot, Axes, Series};
use crate::Context;

#[derive(Serialize)]
struct PoissonResult {
    method: PoissonMethod,
    dim: usize,
    radius: f64,
    cells: usize,
    k: f64,
    p: f64,
    s: f64,
    centering: Centering,
    mean_subtracted: f64,
    projection: f64,
    #[serde(rename = "G0")]
    g0: f64,
    #[serde(rename = "G1")]
    g1: f64,
    #[serde(rename = "H")]
    h: f64,
    #[serde(rename = "Psi")]
    psi: f64,
    growth: GrowthReport,
    #[serde(rename = "M0")]
    m0: f64,
    #[serde(rename = "R0")]
    r0: f64,
    witness: LyapunovWitness,
    interior_residual: f64,
}

pub fn run(ctx: &Context<'_>, out: &mut OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let c = ctx.config.poisson.as_ref().expect("validated");
    let d = ctx.config.grid.expect("validated").d;
    let built = c.build(ctx.config.model.as_ref(), d)?;
    let grid = ctx.config.grid_spec(&built.model)?;
    let method = c.method.unwrap_or(if d == 1 {
        PoissonMethod::Quadrature
    } else {
        PoissonMethod::Grid
    });
    let radii = c
        .radii
        .clone()
        .unwrap_or_else(|| vec![0.25 * grid.radius, 0.5 * grid.radius]);
    let opts = c.solver.options(ctx.strict);
    let (a, b) = (built.model.a, built.model.b);

    let rho = report.timed("density", || num("density", solve_grid_with(&a, &b, &grid, &opts)))?;
    let mut prob = num("problem", PoissonProblem::new(a, b, built.psi, c.k, rho))?;
    if let Some(p) = c.p {
        prob = num("problem", prob.with_p(p))?;
    }
    if let Some(s) = c.s {
        prob = num("problem", prob.with_s(s))?;
    }
    if !c.centered {
        prob = prob.uncentered();
    }
    let sol = report.timed("solve", || match method {
        PoissonMethod::Quadrature => num("solve", solve_poisson_1d(&prob)),
        PoissonMethod::Grid => num("solve", solve_poisson_grid_with(&prob, &opts)),
    })?;
    let growth = report.timed("bounds", || num("bounds", verify_growth_bounds(&sol, &prob, &radii)))?;
    let residual = interior_residual(&sol);

    let [q0, q1, qh] = growth.quotients;
    let finite = [q0, q1, qh].iter().all(|q| q.is_finite())
        && growth
            .per_radius
            .iter()
            .all(|r| [r.q0, r.q1, r.qh].iter().all(|q| q.is_finite()));
    report.check(
        "quotients-finite",
        finite,
        format!("G0/Psi = {q0:e}, G1/Psi = {q1:e}, H/Psi = {qh:e}"),
    );
    if let Some(tol) = c.residual_tol {
        report.check(
            "interior-residual",
            residual <= tol,
            format!("max |Lu - psi~| on |x| <= R/2: {residual:e} (tol {tol:e})"),
        );
    }

    let g = sol.grid;
    let header: &[&str] = if d == 1 {
        &["x", "u", "du", "residual"]
    } else {
        &["x1", "x2", "u", "du1", "du2", "residual"]
    };
    let rows = (0..g.len())
        .map(|i| {
            let x = g.center(i);
            let mut row: Vec<Cell> = x[..d].iter().map(|&t| Cell::F(t)).collect();
            row.push(Cell::F(sol.u[i]));
            row.extend(sol.grad[i][..d].iter().map(|&t| Cell::F(t)));
            row.push(Cell::F(sol.residual[i]));
            row
        })
        .collect();
    out.write_csv("poisson.csv", header, rows)?;

    let bounds = sol.bounds;
    let result = PoissonResult {
        method,
        dim: d,
        radius: g.radius,
        cells: g.cells,
        k: bounds.k,
        p: bounds.p,
        s: bounds.s,
        centering: prob.centering,
        mean_subtracted: sol.mean_subtracted,
        projection: sol.projection,
        g0: bounds.g0,
        g1: bounds.g1,
        h: bounds.h,
        psi: bounds.psi_sup,
        growth,
        m0: sol.witness.m0,
        r0: sol.witness.r0,
        witness: sol.witness,
        interior_residual: residual,
    };
    out.write_json("poisson.json", &result)?;

    if ctx.svg && d == 1 {
        let series = [
            Series {
                label: "u",
                points: (0..g.len()).map(|i| (g.center(i)[0], sol.u[i])).collect(),
            },
            Series {
                label: "du",
                points: (0..g.len()).map(|i| (g.center(i)[0], sol.grad[i][0])).collect(),
            },
        ];
        out.write_bytes(
            "poisson.svg",
            line_plot("Poisson solution", "x", "u", Axes::default(), &series).as_bytes(),
        )?;
    }
    Ok(())
}
