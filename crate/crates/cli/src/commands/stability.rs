//! `stability`: weighted L¹ distance between the stationary densities of a
//! perturbed pair against the coefficient discrepancy, over a δ grid.

use serde::Serialize;

use fpk_core::coeffs::{DiffusionMatrixField, DriftField};
use fpk_core::fpk::GridSpec;
use fpk_core::stability::{
    duality_convergence, stability_sweep, CoefficientPair, DualityConvergence, OuFamily, StabilityReport, SweepResult,
};
use fpk_core::testfn::TestFunction;

use super::num;
use crate::config::{BuiltModel, FamilyConfig, Params, StabilityChecks, StabilityConfig};
use crate::error::CliError;
use crate::output::{Cell, OutputDir};
use crate::report::RunReport;
use crate::svg::{line_plot, Axes, Series};
use crate::Context;

pub const CSV_HEADER: [&str; 5] = ["delta", "lhs", "rhs_diffusion", "rhs_drift", "c_hat"];

pub type PairBuilder<'a> = Box<dyn Fn(f64) -> fpk_core::Result<CoefficientPair> + Sync + 'a>;

/// Coefficient pair as a function of δ, plus the grid it is solved on.
/// Custom families are built once at δ = 0 so expression errors surface as
/// validation errors before any solve.
pub fn family<'a>(ctx: &Context<'a>, c: &'a StabilityConfig) -> Result<(PairBuilder<'a>, GridSpec), CliError> {
    let d = ctx.config.grid.expect("validated").d;
    match c.family {
        FamilyConfig::OuDrift | FamilyConfig::OuDiffusion => {
            let fam = if c.family == FamilyConfig::OuDrift {
                OuFamily::Drift
            } else {
                OuFamily::Diffusion
            };
            let sigma = BuiltModel {
                a: DiffusionMatrixField::identity(d),
                b: DriftField::ou(d, 1.0),
                radius: None,
            };
            let grid = ctx.config.grid_spec(&sigma)?;
            Ok((Box::new(move |delta| fam.pair(d, delta)), grid))
        }
        FamilyConfig::Custom => {
            let sigma_cfg = ctx.config.model.as_ref().expect("validated");
            let mu_cfg = c.perturbed.as_ref().expect("validated");
            let sigma = sigma_cfg.build(d, &Params::new(), "model")?;
            mu_cfg.build(d, &delta_param(0.0), "stability.perturbed")?;
            let grid = ctx.config.grid_spec(&sigma)?;
            let builder = move |delta: f64| {
                let mu = mu_cfg
                    .build(d, &delta_param(delta), "stability.perturbed")
                    .map_err(|e| fpk_core::Error::InvalidArgument(e.to_string()))?;
                CoefficientPair::new(mu.a, mu.b, sigma.a.clone(), sigma.b.clone())
            };
            Ok((Box::new(builder), grid))
        }
    }
}

fn delta_param(delta: f64) -> Params {
    Params::from([("delta".to_string(), delta)])
}

pub fn report_row(r: &StabilityReport) -> Vec<Cell> {
    vec![
        Cell::F(r.delta),
        Cell::F(r.lhs),
        Cell::F(r.rhs_diffusion),
        Cell::F(r.rhs_drift),
        r.c_hat_empirical.into(),
    ]
}

/// Slope and Ĉ-spread checks shared with the δ sweep.
pub fn fit_checks(report: &mut RunReport, checks: &StabilityChecks, slope: f64, c_hat_min: f64, c_hat_max: f64) {
    if let Some(target) = checks.slope {
        report.check(
            "loglog-slope",
            (slope - target).abs() <= checks.slope_tolerance,
            format!("slope {slope} (target {target} +/- {})", checks.slope_tolerance),
        );
    }
    if let Some(max) = checks.c_hat_spread_max {
        let spread = c_hat_max / c_hat_min;
        report.check(
            "c-hat-spread",
            spread <= max,
            format!("max/min {spread} (limit {max}); min {c_hat_min:e}, max {c_hat_max:e}"),
        );
    }
}

pub fn loglog_svg(reports: &[StabilityReport]) -> String {
    let series = [
        Series {
            label: "lhs",
            points: reports.iter().map(|r| (r.delta, r.lhs)).collect(),
        },
        Series {
            label: "rhs",
            points: reports
                .iter()
                .map(|r| (r.delta, r.rhs_diffusion + r.rhs_drift))
                .collect(),
        },
    ];
    let axes = Axes {
        log_x: true,
        log_y: true,
    };
    line_plot("stability sweep", "delta", "weighted L1 distance", axes, &series)
}

#[derive(Serialize)]
struct StabilityResult<'a> {
    family: FamilyConfig,
    r: f64,
    k: f64,
    radius: f64,
    cells: usize,
    slope: f64,
    intercept: f64,
    fit_residual: f64,
    fit_r_squared: f64,
    c_hat_max: f64,
    c_hat_min: f64,
    reports: &'a [StabilityReport],
    duality: Option<DualityConvergence>,
}

pub fn run(ctx: &Context<'_>, out: &mut OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let c = ctx.config.stability.as_ref().expect("validated");
    let deltas = c.deltas.as_ref().expect("validated");
    let (builder, grid) = family(ctx, c)?;
    let opts = c.solver.options(ctx.strict);

    let sweep: SweepResult = report.timed("sweep", || {
        num("sweep", stability_sweep(&builder, deltas, &grid, c.r, c.k, &opts))
    })?;
    fit_checks(report, &c.checks, sweep.slope, sweep.c_hat_min, sweep.c_hat_max);

    let duality = match c.duality {
        Some(dc) => {
            let delta = *deltas.last().expect("validated");
            let pair = num("duality", builder(delta))?;
            let v = TestFunction::bump_times_square(grid.dim, dc.scale);
            let conv = report.timed("duality", || {
                num("duality", duality_convergence(&pair, &grid, &v, dc.levels, &opts))
            })?;
            let r0 = conv.reports[0].residual;
            report.check(
                "duality-residual",
                r0 <= dc.factor * conv.discretization_error,
                format!("residual {r0:e}, discretization error {:e}", conv.discretization_error),
            );
            report.check(
                "duality-order",
                conv.order >= dc.min_order,
                format!("order {} (min {})", conv.order, dc.min_order),
            );
            Some(conv)
        }
        None => None,
    };

    out.write_csv(
        "stability.csv",
        &CSV_HEADER,
        sweep.reports.iter().map(report_row).collect(),
    )?;
    let result = StabilityResult {
        family: c.family,
        r: c.r,
        k: c.k,
        radius: grid.radius,
        cells: grid.cells,
        slope: sweep.slope,
        intercept: sweep.intercept,
        fit_residual: sweep.fit_rms,
        fit_r_squared: sweep.fit_r_squared,
        c_hat_max: sweep.c_hat_max,
        c_hat_min: sweep.c_hat_min,
        reports: &sweep.reports,
        duality,
    };
    out.write_json("stability.json", &result)?;
    if ctx.svg {
        let fitted: Vec<StabilityReport> = sweep.reports.iter().copied().filter(|r| r.delta > 0.0).collect();
        out.write_bytes("stability.svg", loglog_svg(&fitted).as_bytes())?;
    }
    Ok(())
}
