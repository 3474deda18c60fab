use std::process::ExitCode;

use clap::Parser;

use fpk_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &cli.opts) {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for f in &report.failures {
                println!("POINT-FAILED {} (value {}): {}", f.index, f.value, f.error);
            }
            println!(
                "{} files written, {} of {} checks passed",
                report.manifest.len(),
                report.checks.iter().filter(|c| c.passed).count(),
                report.checks.len()
            );
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
