//! One module per subcommand.

mod dini;
mod meanfield;
mod poisson;
mod solve;
mod stability;
mod sweep;

use crate::error::CliError;
use crate::output::OutputDir;
use crate::report::RunReport;
use crate::{Command, Context};

pub fn dispatch(
    command: Command,
    ctx: &Context<'_>,
    out: &mut OutputDir,
    report: &mut RunReport,
) -> Result<(), CliError> {
    match command {
        Command::Dini => dini::run(ctx, out, report),
        Command::Solve => solve::run(ctx, out, report),
        Command::Poisson => poisson::run(ctx, out, report),
        Command::Stability => stability::run(ctx, out, report),
        Command::Meanfield => meanfield::run(ctx, out, report),
        Command::Sweep => sweep::run(ctx, out, report),
    }
}

/// Wraps a core error with the stage it came from.
pub(crate) fn num<T>(stage: &str, r: fpk_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::numerical(stage, e))
}
