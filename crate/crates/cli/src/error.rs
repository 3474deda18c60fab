//! Errors of the command line runner and their exit codes.

use thiserror::Error;

/// Exit status of a run whose declared checks did not all pass.
pub const EXIT_CHECKS_FAILED: i32 = 1;
/// Exit status of a config that failed parsing or validation.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status of a numerical or I/O failure.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config:{}", format_problems(.problems))]
    Invalid { problems: Vec<(String, String)> },

    #[error("numerical failure in {stage}: {source}")]
    Numerical {
        stage: String,
        #[source]
        source: fpk_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("worker pool: {0}")]
    Pool(String),
}

fn format_problems(problems: &[(String, String)]) -> String {
    problems
        .iter()
        .map(|(field, msg)| format!("\n  {field}: {msg}"))
        .collect()
}

impl CliError {
    pub fn validation(field: &str, msg: impl ToString) -> Self {
        CliError::Invalid {
            problems: vec![(field.to_string(), msg.to_string())],
        }
    }

    pub fn numerical(stage: &str, source: fpk_core::Error) -> Self {
        CliError::Numerical {
            stage: stage.to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid { .. } => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }
}
