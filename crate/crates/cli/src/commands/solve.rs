//! `solve`: stationary density with mass, moment and truncation diagnostics.

use serde::Serialize;

use fpk_core::coeffs::{check_condition_h, BoundedBox, ConditionHParams, SamplingSpec};
use fpk_core::fpk::{
    harnack_ratio, moment_report, solve_exact_1d, solve_exact_1d_bounded, solve_grid_with, weak_form_check_grid,
    weighted_lp_norm, GridDensity, MomentReport, QuadratureSpec, SolveDiagnostics, WeakFormReport, BOUNDARY_MASS_LIMIT,
    MASS_TOL,
};
use fpk_core::Error;

use super::num;
use crate::config::{Params, SolveConfig, SolveMethod};
use crate::error::CliError;
use crate::output::{Cell, OutputDir};
use crate::report::RunReport;
use crate::svg::{heat_map, line_plot, Axes, Series};
use crate::Context;

#[derive(Serialize)]
struct ConditionSummary {
    passed: bool,
    /// Present when a clause was violated outright.
    violation: Option<String>,
    params: Option<ConditionHParams>,
}

#[derive(Serialize)]
struct SolveResult<'a> {
    method: SolveMethod,
    dim: usize,
    radius: f64,
    cells: usize,
    mass: f64,
    boundary_mass: f64,
    moments: MomentReport,
    harnack_ratio: Option<f64>,
    weighted_lp_norm: Option<f64>,
    diagnostics: &'a SolveDiagnostics,
    condition_h: Option<ConditionSummary>,
    weak_form: Option<WeakFormReport>,
}

pub fn run(ctx: &Context<'_>, out: &mut OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let defaults = SolveConfig::default();
    let c = ctx.config.solve.as_ref().unwrap_or(&defaults);
    let d = ctx.config.grid.expect("validated").d;
    let model = ctx
        .config
        .model
        .as_ref()
        .expect("validated")
        .build(d, &Params::new(), "model")?;
    let grid = ctx.config.grid_spec(&model)?;
    let opts = c.solver.options(ctx.strict);

    let condition_h = if c.condition_h {
        let region = BoundedBox::symmetric(d, grid.radius);
        let sampling = SamplingSpec::new(
            BoundedBox::symmetric(d, c.sampling.half_width),
            c.sampling.centers,
            c.sampling.points_per_ball,
            ctx.seed,
        );
        let verdict = report.timed("condition-h", || {
            check_condition_h(&model.a, &model.b, &region, &sampling)
        });
        let summary = match verdict {
            Ok(p) => ConditionSummary {
                passed: p.passed(),
                violation: None,
                params: Some(p),
            },
            Err(e @ Error::ConditionViolated { .. }) if !ctx.strict => ConditionSummary {
                passed: false,
                violation: Some(e.to_string()),
                params: None,
            },
            Err(e) => return Err(CliError::numerical("condition-h", e)),
        };
        let detail = match (&summary.violation, &summary.params) {
            (Some(v), _) => v.clone(),
            (None, Some(p)) => p
                .clauses
                .iter()
                .map(|cl| format!("{}: {}", cl.clause, if cl.passed { "ok" } else { cl.detail.as_str() }))
                .collect::<Vec<_>>()
                .join("; "),
            _ => String::new(),
        };
        report.check("condition-h", summary.passed, detail);
        Some(summary)
    } else {
        None
    };

    let rho: GridDensity = report.timed("solve", || match c.method {
        SolveMethod::Grid => num("solve", solve_grid_with(&model.a, &model.b, &grid, &opts)),
        SolveMethod::Exact => {
            let a = &model.a.entries()[0];
            if c.solver.bounded_domain {
                num(
                    "solve",
                    solve_exact_1d_bounded(a, &model.b, &grid, QuadratureSpec::default()),
                )
            } else {
                num("solve", solve_exact_1d(a, &model.b, &grid, QuadratureSpec::default()))
            }
        }
    })?;

    let (moments, harnack, lp) = report.timed("diagnostics", || -> Result<_, CliError> {
        let moments = num("moments", moment_report(&rho, &c.moments))?;
        let harnack = c
            .harnack_radius
            .map(|r| num("harnack", harnack_ratio(&rho, r)))
            .transpose()?;
        let lp = c
            .weighted_lp
            .map(|l| num("weighted-lp", weighted_lp_norm(&rho, l.k, l.p)))
            .transpose()?;
        Ok((moments, harnack, lp))
    })?;
    let weak_form = if c.weak_form_functions > 0 {
        let w = report.timed("weak-form", || {
            num(
                "weak-form",
                weak_form_check_grid(&model.a, &model.b, &grid, c.weak_form_functions, ctx.seed, &opts),
            )
        })?;
        report.check(
            "weak-form",
            w.passed,
            format!(
                "{} of {} test functions within {}x the discretization error",
                w.entries.iter().filter(|e| e.passed).count(),
                w.entries.len(),
                w.factor
            ),
        );
        Some(w)
    } else {
        None
    };

    let mass = rho.mass();
    report.check("unit-mass", (mass - 1.0).abs() <= MASS_TOL, format!("mass {mass}"));
    let boundary_mass = rho.boundary_mass();
    if !c.solver.bounded_domain {
        report.check(
            "boundary-mass",
            boundary_mass < BOUNDARY_MASS_LIMIT,
            format!("{boundary_mass:e} (limit {BOUNDARY_MASS_LIMIT:e})"),
        );
    }

    let header: &[&str] = if d == 1 { &["x", "rho"] } else { &["x1", "x2", "rho"] };
    let rows = rho
        .cells()
        .map(|(x, v)| {
            let mut row: Vec<Cell> = x[..d].iter().map(|&t| Cell::F(t)).collect();
            row.push(Cell::F(v));
            row
        })
        .collect();
    out.write_csv("solve.csv", header, rows)?;
    let result = SolveResult {
        method: c.method,
        dim: d,
        radius: grid.radius,
        cells: grid.cells,
        mass,
        boundary_mass,
        moments,
        harnack_ratio: harnack,
        weighted_lp_norm: lp,
        diagnostics: &rho.diagnostics,
        condition_h,
        weak_form,
    };
    out.write_json("solve.json", &result)?;

    if ctx.svg {
        let svg = if d == 1 {
            let series = [Series {
                label: "rho",
                points: rho.cells().map(|(x, v)| (x[0], v)).collect(),
            }];
            line_plot("stationary density", "x", "rho", Axes::default(), &series)
        } else {
            heat_map("stationary density", grid.cells, grid.radius, rho.values())
        };
        out.write_bytes("solve.svg", svg.as_bytes())?;
    }
    Ok(())
}
