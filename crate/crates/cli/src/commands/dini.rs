//! `dini`: sampled oscillation modulus, Dini integral verdict and the
//! mollification check.

use serde::Serialize;

use fpk_core::coeffs::{
    dini_integral, dini_mean_oscillation, log_radii, mollify, sup_gap, BoundedBox, DiniEstimate, MollifierSpec,
    OscillationModulus, SamplingSpec,
};

use super::num;
use crate::config::DiniExpectation;
use crate::error::CliError;
use crate::output::{Cell, OutputDir};
use crate::report::RunReport;
use crate::svg::{line_plot, Axes, Series};
use crate::Context;

#[derive(Serialize)]
struct MollifiedSummary {
    eps: f64,
    sup_gap: f64,
    /// max_r (ω_ε(r) − ω(r) − 2·stderr(r)); nonpositive when the check passes.
    max_excess: f64,
}

#[derive(Serialize)]
struct DiniResult<'a> {
    dim: usize,
    sampling: &'a SamplingSpec,
    loglog_slope: Option<f64>,
    integral: DiniEstimate,
    mollified: Vec<MollifiedSummary>,
}

pub fn run(ctx: &Context<'_>, out: &mut OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let c = ctx.config.dini.as_ref().expect("validated");
    let d = c.dim(ctx.config.grid.map(|g| g.d));
    let f = c.field.build(d)?;
    let region = BoundedBox::symmetric(d, c.sampling.half_width);
    let sampling = SamplingSpec::new(region, c.sampling.centers, c.sampling.points_per_ball, ctx.seed);
    let radii = log_radii(c.radii.min, c.radii.max, c.radii.count);
    let mollifiers = c
        .mollify
        .iter()
        .map(|&eps| MollifierSpec::new(d, eps).map_err(|e| CliError::validation("dini.mollify", e)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut omega = report.timed("modulus", || {
        num("modulus", dini_mean_oscillation(&f, &radii, &sampling))
    })?;
    if let Some(t0) = c.t0 {
        omega = omega.with_t0(t0);
    }
    let integral = report.timed("dini-integral", || num("dini-integral", dini_integral(&omega)))?;
    out.write_csv("dini.csv", &["r", "omega", "stderr"], modulus_rows(&omega))?;

    let mut mollified = Vec::new();
    let mut curves = Vec::new();
    let mut rows = Vec::new();
    report.timed("mollify", || -> Result<(), CliError> {
        for m in &mollifiers {
            let g = num("mollify", mollify(&f, m))?;
            let w = num("mollify", dini_mean_oscillation(&g, &radii, &sampling))?;
            let max_excess = (0..radii.len())
                .map(|j| w.omega[j] - omega.omega[j] - 2.0 * omega.stderr[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let per_axis = if d == 1 { 401 } else { 61 };
            mollified.push(MollifiedSummary {
                eps: m.scale,
                sup_gap: sup_gap(&f, &g, &region, per_axis),
                max_excess,
            });
            for j in 0..radii.len() {
                rows.push(vec![
                    Cell::F(m.scale),
                    Cell::F(radii[j]),
                    Cell::F(w.omega[j]),
                    Cell::F(w.stderr[j]),
                ]);
            }
            curves.push((m.scale, w));
        }
        Ok(())
    })?;
    if !mollified.is_empty() {
        out.write_csv("dini-mollified.csv", &["eps", "r", "omega", "stderr"], rows)?;
    }

    if let Some(expect) = c.expect {
        let finite = integral.finite;
        report.check(
            "dini-verdict",
            finite == (expect == DiniExpectation::Finite),
            format!(
                "integral {} (value {:e})",
                if finite { "finite" } else { "divergent" },
                integral.value
            ),
        );
    }
    for m in &mollified {
        report.check(
            &format!("mollified-modulus-eps-{}", m.eps),
            m.max_excess <= 0.0,
            format!("max excess over omega + 2 stderr: {:e}", m.max_excess),
        );
    }
    if mollified.len() >= 2 {
        let mut by_eps: Vec<&MollifiedSummary> = mollified.iter().collect();
        by_eps.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let decreasing = by_eps.windows(2).all(|w| w[1].sup_gap < w[0].sup_gap);
        let gaps: Vec<String> = by_eps.iter().map(|m| format!("{}:{:e}", m.eps, m.sup_gap)).collect();
        report.check("sup-gap-decreasing", decreasing, gaps.join(", "));
    }

    let result = DiniResult {
        dim: d,
        sampling: &sampling,
        loglog_slope: omega.loglog_slope(f64::INFINITY),
        integral,
        mollified,
    };
    out.write_json("dini.json", &result)?;

    if ctx.svg {
        let mut series = vec![Series {
            label: "field",
            points: points(&omega),
        }];
        let labels: Vec<String> = curves.iter().map(|(eps, _)| format!("eps = {eps}")).collect();
        for ((_, w), label) in curves.iter().zip(&labels) {
            series.push(Series {
                label,
                points: points(w),
            });
        }
        let axes = Axes {
            log_x: true,
            log_y: true,
        };
        out.write_bytes(
            "dini.svg",
            line_plot("oscillation modulus", "r", "omega(r)", axes, &series).as_bytes(),
        )?;
    }
    Ok(())
}

fn modulus_rows(w: &OscillationModulus) -> Vec<Vec<Cell>> {
    (0..w.radii.len())
        .map(|j| vec![Cell::F(w.radii[j]), Cell::F(w.omega[j]), Cell::F(w.stderr[j])])
        .collect()
}

fn points(w: &OscillationModulus) -> Vec<(f64, f64)> {
    w.radii.iter().copied().zip(w.omega.iter().copied()).collect()
}
