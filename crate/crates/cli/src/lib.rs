//! Config-driven experiment runner for `fpk-core`.
//!
//! One JSON config drives one run. Each run writes CSV and JSON artifacts,
//! optional SVG plots and a `report.json` with the config digest, stage
//! timings, a manifest of the written files and the declared checks.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;
use output::OutputDir;
use report::{config_digest, RunReport};

pub const DEFAULT_OUT_DIR: &str = "fpk-out";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Dini mean oscillation modulus of a scalar field.
    Dini,
    /// Stationary density of a model.
    Solve,
    /// Poisson equation L u = ψ − ∫ψρ with growth-bound quotients.
    Poisson,
    /// Weighted L¹ stability of stationary densities under perturbation.
    Stability,
    /// Fixed-point iteration for the nonlinear (mean-field) equation.
    Meanfield,
    /// Concurrent parameter sweep over δ or ε.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dini => "dini",
            Command::Solve => "solve",
            Command::Poisson => "poisson",
            Command::Stability => "stability",
            Command::Meanfield => "meanfield",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fpk", version, about = "Stationary Kolmogorov equation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: RunOptions,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunOptions {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Escalate warnings and sweep-point failures to errors.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "FPK_WORKERS")]
    pub workers: Option<usize>,
    /// Seed for every sampled quantity (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

/// Settings shared by every command.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub seed: u64,
    pub strict: bool,
    pub svg: bool,
}

/// Loads, validates and runs `command`. Numerical failures still write
/// `report.json` (with `error` set) before they are returned.
pub fn run(command: Command, opts: &RunOptions) -> Result<RunReport, CliError> {
    let path = opts
        .config
        .as_ref()
        .ok_or_else(|| CliError::validation("--config", "a config file is required"))?;
    let mut config = ExperimentConfig::from_path(path)?;
    run_config(command, &mut config, opts)
}

pub fn run_config(command: Command, config: &mut ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    config.validate(command)?;
    if opts.workers == Some(0) {
        return Err(CliError::validation("--workers", "must be at least 1"));
    }
    let seed = opts.seed.or(config.seed).unwrap_or(0);
    config.seed = Some(seed);
    let digest = config_digest(&config.canonical_json(), seed);
    let out_path = opts
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Pool(e.to_string()))?;

    let mut out = OutputDir::create(&out_path)?;
    let mut report = RunReport::new(command.name(), digest, seed, opts.strict);
    let ctx = Context {
        config,
        seed,
        strict: opts.strict,
        svg: config.output.svg,
    };
    let result = pool.install(|| commands::dispatch(command, &ctx, &mut out, &mut report));
    if let Err(e) = &result {
        if e.exit_code() == error::EXIT_VALIDATION {
            return Err(result.unwrap_err());
        }
        report.error = Some(e.to_string());
    }
    report.manifest = out.into_manifest();
    report.finalize();
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    let report_path = out_path.join(REPORT_FILE);
    std::fs::write(&report_path, bytes).map_err(|e| CliError::Io {
        path: report_path.display().to_string(),
        source: e,
    })?;
    result.map(|()| report)
}
