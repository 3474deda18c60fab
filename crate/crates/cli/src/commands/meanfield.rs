//! `meanfield`: Picard iteration of the nonlinear equation from one or more
//! starts, plus the probe estimate of the contraction factor.

use rayon::prelude::*;
use serde::Serialize;

use fpk_core::fpk::GridDensity;
use fpk_core::meanfield::{
    contraction_estimate, empirical_threshold, gaussian_probe_family, iterate, probe_pairs, ContractionEstimate,
    FixedPointTrace, MeanFieldModel,
};
use fpk_core::stability::weighted_l1_distance;

use super::num;
use crate::config::{MeanfieldConfig, Params};
use crate::error::CliError;
use crate::output::{Cell, OutputDir};
use crate::report::RunReport;
use crate::svg::{line_plot, Axes, Series};
use crate::Context;

pub const CSV_HEADER: [&str; 4] = ["start", "iteration", "gap", "contraction_factor"];

#[derive(Debug, Clone, Serialize)]
pub struct StartSummary {
    pub mean: [f64; 2],
    pub var: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_gap: f64,
    pub max_factor: Option<f64>,
    #[serde(rename = "M_hat")]
    pub m_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanfieldResult {
    pub eps: f64,
    pub k: f64,
    pub n_lip: f64,
    pub m_lip: f64,
    pub converged: bool,
    /// Largest iteration count over the starts.
    pub iterations: usize,
    #[serde(rename = "M_hat")]
    pub m_hat: f64,
    pub starts: Vec<StartSummary>,
    /// Largest P_k distance between fixed points reached from different starts.
    pub fixed_point_spread: Option<f64>,
    pub contraction: Option<ContractionEstimate>,
    /// Smallest ε at which the probe factor reaches 1 (`null` if not searched or not reached).
    pub eps_threshold: Option<f64>,
    pub threshold_searched: bool,
}

pub fn build_model(ctx: &Context<'_>, c: &MeanfieldConfig, eps: f64) -> Result<MeanFieldModel, CliError> {
    let d = ctx.config.grid.expect("validated").d;
    let base = ctx
        .config
        .model
        .as_ref()
        .expect("validated")
        .build(d, &Params::new(), "model")?;
    let grid = ctx.config.grid_spec(&base)?;
    let kernel = c.kernel.build(d)?;
    let mut model = MeanFieldModel::new(base.a, base.b, kernel, eps, c.k, grid)
        .map_err(|e| CliError::validation("meanfield", e))?;
    if let Some(l) = c.lipschitz {
        model = model
            .with_lipschitz(l.n, l.m)
            .map_err(|e| CliError::validation("meanfield.lipschitz", e))?;
    }
    model.opts = c.solver.options(ctx.strict);
    Ok(model)
}

/// Runs one ε: iterations from every start, probe estimate and threshold
/// search. Writes `meanfield.csv` and `meanfield.json` into `out`.
pub fn execute(
    ctx: &Context<'_>,
    c: &MeanfieldConfig,
    eps: f64,
    out: &mut OutputDir,
    report: &mut RunReport,
) -> Result<MeanfieldResult, CliError> {
    let model = build_model(ctx, c, eps)?;
    let grid = model.grid;
    let starts: Vec<([f64; 2], f64)> = if c.starts.is_empty() {
        vec![([0.0; 2], 1.0)]
    } else {
        c.starts
            .iter()
            .map(|s| {
                let mut m = [0.0; 2];
                m[..s.mean.len()].copy_from_slice(&s.mean);
                (m, s.var)
            })
            .collect()
    };
    let initial = starts
        .iter()
        .map(|(m, v)| num("start", GridDensity::gaussian(grid, *m, *v)))
        .collect::<Result<Vec<_>, _>>()?;

    let traces: Vec<FixedPointTrace> = report.timed("iterate", || {
        initial
            .par_iter()
            .map(|rho0| num("iterate", iterate(&model, rho0, c.tol, c.max_iter)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let contraction = if c.contraction {
        let pairs = probe_pairs(&num("probes", gaussian_probe_family(&grid))?);
        Some(report.timed("contraction", || {
            num("contraction", contraction_estimate(&model, &pairs))
        })?)
    } else {
        None
    };
    let eps_threshold = match c.threshold {
        Some(t) => {
            let pairs = probe_pairs(&num("probes", gaussian_probe_family(&grid))?);
            report.timed("threshold", || {
                num("threshold", empirical_threshold(&model, &pairs, t.eps_max, t.tol))
            })?
        }
        None => None,
    };

    let mut spread: Option<f64> = None;
    for i in 0..traces.len() {
        for j in i + 1..traces.len() {
            let dist = num(
                "uniqueness",
                weighted_l1_distance(traces[i].last(), traces[j].last(), c.k),
            )?;
            spread = Some(spread.map_or(dist, |s| s.max(dist)));
        }
    }

    let summaries: Vec<StartSummary> = traces
        .iter()
        .zip(&starts)
        .map(|(t, (mean, var))| StartSummary {
            mean: *mean,
            var: *var,
            converged: t.converged,
            iterations: t.iterations(),
            final_gap: t.gaps.last().copied().unwrap_or(0.0),
            max_factor: t.factors.iter().copied().reduce(f64::max),
            m_hat: t.m_hat,
        })
        .collect();

    let converged = traces.iter().all(|t| t.converged);
    report.check(
        "converged",
        converged,
        format!(
            "{} of {} starts reached tol {:e}",
            traces.iter().filter(|t| t.converged).count(),
            traces.len(),
            c.tol
        ),
    );
    let max_factor = summaries.iter().filter_map(|s| s.max_factor).reduce(f64::max);
    report.check(
        "iteration-factors-below-one",
        max_factor.is_none_or(|f| f < 1.0),
        match max_factor {
            Some(f) => format!("largest gap ratio {f}"),
            None => "fewer than two iterations".to_string(),
        },
    );
    if let Some(s) = spread {
        let tol = c.uniqueness_tol.unwrap_or(10.0 * c.tol);
        report.check(
            "fixed-point-uniqueness",
            s <= tol,
            format!("largest distance between fixed points {s:e} (tol {tol:e})"),
        );
    }
    if let Some(est) = &contraction {
        report.check(
            "probe-contraction",
            est.factor < 1.0,
            format!("probe factor {} at eps {}", est.factor, est.eps),
        );
    }

    let mut rows = Vec::new();
    for (s, t) in traces.iter().enumerate() {
        for (i, gap) in t.gaps.iter().enumerate() {
            let factor = if i == 0 { None } else { Some(t.factors[i - 1]) };
            rows.push(vec![Cell::U(s), Cell::U(i + 1), Cell::F(*gap), factor.into()]);
        }
    }
    out.write_csv("meanfield.csv", &CSV_HEADER, rows)?;
    let result = MeanfieldResult {
        eps,
        k: c.k,
        n_lip: model.n_lip,
        m_lip: model.m_lip,
        converged,
        iterations: summaries.iter().map(|s| s.iterations).max().unwrap_or(0),
        m_hat: traces.iter().map(|t| t.m_hat).fold(0.0, f64::max),
        starts: summaries,
        fixed_point_spread: spread,
        contraction,
        eps_threshold,
        threshold_searched: c.threshold.is_some(),
    };
    out.write_json("meanfield.json", &result)?;
    if ctx.svg {
        let labels: Vec<String> = (0..traces.len()).map(|s| format!("start {s}")).collect();
        let series: Vec<Series> = traces
            .iter()
            .zip(&labels)
            .map(|(t, label)| Series {
                label,
                points: t.gaps.iter().enumerate().map(|(i, g)| ((i + 1) as f64, *g)).collect(),
            })
            .collect();
        let axes = Axes {
            log_x: false,
            log_y: true,
        };
        out.write_bytes(
            "meanfield.svg",
            line_plot("fixed-point gaps", "iteration", "gap", axes, &series).as_bytes(),
        )?;
    }
    Ok(result)
}

pub fn run(ctx: &Context<'_>, out: &mut OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let c = ctx.config.meanfield.as_ref().expect("validated");
    execute(ctx, c, c.eps.expect("validated"), out, report).map(|_| ())
}
