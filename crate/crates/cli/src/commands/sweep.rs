//! `sweep`: concurrent runs over a δ (stability) or ε (meanfield) axis.
//!
//! Point `i` writes into `point-iii/` only, with its own `report.json`; the
//! merged summary goes to `sweep.csv` and `sweep.json`.

use rayon::prelude::*;
use serde::Serialize;

use fpk_core::quadrature::fit_line;
use fpk_core::stability::{stability_report, StabilityReport};

use super::{meanfield, num, stability};
use crate::config::SweepTarget;
use crate::error::CliError;
use crate::output::{Cell, OutputDir};
use crate::report::{Check, ManifestEntry, PointFailure, RunReport};
use crate::Context;

enum PointData {
    Stability(StabilityReport),
    Meanfield(Box<meanfield::MeanfieldResult>),
}

struct PointOk {
    data: PointData,
    checks: Vec<Check>,
}

struct Point {
    index: usize,
    value: f64,
    dir: String,
    manifest: Vec<ManifestEntry>,
    outcome: Result<PointOk, CliError>,
}

#[derive(Serialize)]
struct PointStatus {
    index: usize,
    value: f64,
    dir: String,
    ok: bool,
    error: Option<String>,
}

#[derive(Serialize, Default)]
struct Fit {
    slope: Option<f64>,
    intercept: Option<f64>,
    fit_residual: Option<f64>,
    fit_r_squared: Option<f64>,
}

#[derive(Serialize)]
struct SweepSummary {
    target: SweepTarget,
    axis: &'static str,
    points: Vec<PointStatus>,
    failures: usize,
    /// Stability: log lhs against log δ. Meanfield: probe factor against ε.
    #[serde(flatten)]
    fit: Fit,
    c_hat_max: Option<f64>,
    c_hat_min: Option<f64>,
}

pub fn point_dir(index: usize) -> String {
    format!("point-{index:03}")
}

pub fn run(ctx: &Context<'_>, out: &mut OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let s = ctx.config.sweep.as_ref().expect("validated");
    let stab_cfg = ctx.config.stability.as_ref();
    let mf_cfg = ctx.config.meanfield.as_ref();
    // Build everything once up front so config errors stop the sweep before any solve.
    let stab = match s.target {
        SweepTarget::Stability => Some(stability::family(ctx, stab_cfg.expect("validated"))?),
        SweepTarget::Meanfield => {
            meanfield::build_model(ctx, mf_cfg.expect("validated"), 0.0)?;
            None
        }
    };

    let root: &OutputDir = out;
    let points: Vec<Point> = report.timed("points", || {
        s.values
            .par_iter()
            .enumerate()
            .map(|(index, &value)| {
                let dir = point_dir(index);
                let mut point_report =
                    RunReport::new("sweep-point", report_digest(ctx, index, value), ctx.seed, ctx.strict);
                let mut sub = match root.subdir(&dir) {
                    Ok(sub) => sub,
                    Err(e) => {
                        return Point {
                            index,
                            value,
                            dir,
                            manifest: Vec::new(),
                            outcome: Err(e),
                        }
                    }
                };
                let outcome = match s.target {
                    SweepTarget::Stability => {
                        let c = stab_cfg.expect("validated");
                        let (builder, grid) = stab.as_ref().expect("built");
                        point_report
                            .timed("solve", || {
                                num("sweep point", builder(value)).and_then(|pair| {
                                    num(
                                        "sweep point",
                                        stability_report(&pair, grid, c.r, c.k, value, &c.solver.options(ctx.strict)),
                                    )
                                })
                            })
                            .and_then(|rep| {
                                sub.write_csv(
                                    "stability.csv",
                                    &stability::CSV_HEADER,
                                    vec![stability::report_row(&rep)],
                                )?;
                                sub.write_json("stability.json", &rep)?;
                                Ok(PointData::Stability(rep))
                            })
                    }
                    SweepTarget::Meanfield => {
                        meanfield::execute(ctx, mf_cfg.expect("validated"), value, &mut sub, &mut point_report)
                            .map(|r| PointData::Meanfield(Box::new(r)))
                    }
                };
                if let Err(e) = &outcome {
                    point_report.error = Some(e.to_string());
                }
                point_report.finalize();
                point_report.manifest = sub_manifest(&sub);
                let written = sub.write_json("report.json", &point_report);
                let manifest = sub.into_manifest();
                let outcome = written.and(outcome).map(|data| PointOk {
                    data,
                    checks: point_report.checks,
                });
                Point {
                    index,
                    value,
                    dir,
                    manifest,
                    outcome,
                }
            })
            .collect()
    });

    let mut first_error = None;
    let mut statuses = Vec::new();
    let mut ok: Vec<(f64, PointData)> = Vec::new();
    for p in points {
        out.absorb(p.manifest);
        match p.outcome {
            Ok(data) => {
                for c in data.checks {
                    report.checks.push(Check {
                        name: format!("{}/{}", p.dir, c.name),
                        ..c
                    });
                }
                statuses.push(PointStatus {
                    index: p.index,
                    value: p.value,
                    dir: p.dir,
                    ok: true,
                    error: None,
                });
                ok.push((p.value, data.data));
            }
            Err(e) => {
                let msg = e.to_string();
                report.failures.push(PointFailure {
                    index: p.index,
                    value: p.value,
                    error: msg.clone(),
                });
                statuses.push(PointStatus {
                    index: p.index,
                    value: p.value,
                    dir: p.dir,
                    ok: false,
                    error: Some(msg),
                });
                first_error.get_or_insert(e);
            }
        }
    }

    let failures = report.failures.len();
    let summary = match s.target {
        SweepTarget::Stability => {
            let reps: Vec<StabilityReport> = ok
                .iter()
                .filter_map(|(_, d)| match d {
                    PointData::Stability(r) => Some(*r),
                    PointData::Meanfield(_) => None,
                })
                .collect();
            out.write_csv(
                "sweep.csv",
                &stability::CSV_HEADER,
                reps.iter().map(stability::report_row).collect(),
            )?;
            let fitted: Vec<&StabilityReport> = reps.iter().filter(|r| r.delta > 0.0 && r.lhs > 0.0).collect();
            let xs: Vec<f64> = fitted.iter().map(|r| r.delta.ln()).collect();
            let ys: Vec<f64> = fitted.iter().map(|r| r.lhs.ln()).collect();
            let fit = fit_line(&xs, &ys);
            let c_hats: Vec<f64> = fitted.iter().filter_map(|r| r.c_hat_empirical).collect();
            let c_hat_max = c_hats.iter().copied().reduce(f64::max);
            let c_hat_min = c_hats.iter().copied().reduce(f64::min);
            let checks = &stab_cfg.expect("validated").checks;
            match (fit, c_hat_min, c_hat_max) {
                (Some(f), Some(lo), Some(hi)) => stability::fit_checks(report, checks, f.slope, lo, hi),
                _ => report.check(
                    "loglog-slope",
                    checks.slope.is_none(),
                    format!("only {} usable points for the fit", fitted.len()),
                ),
            }
            if ctx.svg {
                out.write_bytes(
                    "sweep.svg",
                    stability::loglog_svg(&fitted.into_iter().copied().collect::<Vec<_>>()).as_bytes(),
                )?;
            }
            SweepSummary {
                target: s.target,
                axis: "delta",
                points: statuses,
                failures,
                fit: fit
                    .map(|f| Fit {
                        slope: Some(f.slope),
                        intercept: Some(f.intercept),
                        fit_residual: Some(f.rms_residual),
                        fit_r_squared: Some(f.r_squared),
                    })
                    .unwrap_or_default(),
                c_hat_max,
                c_hat_min,
            }
        }
        SweepTarget::Meanfield => {
            let results: Vec<(f64, &meanfield::MeanfieldResult)> = ok
                .iter()
                .filter_map(|(v, d)| match d {
                    PointData::Meanfield(r) => Some((*v, r.as_ref())),
                    PointData::Stability(_) => None,
                })
                .collect();
            let rows = results
                .iter()
                .map(|(eps, r)| {
                    vec![
                        Cell::F(*eps),
                        r.contraction.as_ref().map(|c| c.factor).into(),
                        Cell::U(r.iterations),
                        Cell::S(r.converged.to_string()),
                        Cell::F(r.m_hat),
                    ]
                })
                .collect();
            out.write_csv(
                "sweep.csv",
                &["eps", "contraction_factor", "iterations", "converged", "M_hat"],
                rows,
            )?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = results
                .iter()
                .filter_map(|(eps, r)| r.contraction.as_ref().map(|c| (*eps, c.factor)))
                .unzip();
            let fit = fit_line(&xs, &ys);
            SweepSummary {
                target: s.target,
                axis: "eps",
                points: statuses,
                failures,
                fit: fit
                    .map(|f| Fit {
                        slope: Some(f.slope),
                        intercept: Some(f.intercept),
                        fit_residual: Some(f.rms_residual),
                        fit_r_squared: Some(f.r_squared),
                    })
                    .unwrap_or_default(),
                c_hat_max: None,
                c_hat_min: None,
            }
        }
    };
    out.write_json("sweep.json", &summary)?;

    match first_error {
        Some(e) if ctx.strict => Err(e),
        _ => Ok(()),
    }
}

/// Manifest entries of a point directory, for its own report.
fn sub_manifest(sub: &OutputDir) -> Vec<ManifestEntry> {
    sub.manifest().to_vec()
}

/// Digest of the sweep config restricted to one point.
fn report_digest(ctx: &Context<'_>, index: usize, value: f64) -> String {
    crate::report::config_digest(
        &format!("{}\npoint={index}\nvalue={value:?}", ctx.config.canonical_json()),
        ctx.seed,
    )
}
