//! Run report: config digest, stage timings, file manifest and checks.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{EXIT_CHECKS_FAILED, EXIT_RUNTIME};

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A sweep point that did not produce a result.
#[derive(Debug, Clone, Serialize)]
pub struct PointFailure {
    pub index: usize,
    pub value: f64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical config (with the effective seed).
    pub config_digest: String,
    pub seed: u64,
    pub strict: bool,
    pub stages: Vec<StageTiming>,
    pub manifest: Vec<ManifestEntry>,
    pub checks: Vec<Check>,
    pub failures: Vec<PointFailure>,
    /// Set when the run aborted; the report then covers the stages before the failure.
    pub error: Option<String>,
    pub passed: bool,
}

impl RunReport {
    pub fn new(command: &str, config_digest: String, seed: u64, strict: bool) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_digest,
            seed,
            strict,
            stages: Vec::new(),
            manifest: Vec::new(),
            checks: Vec::new(),
            failures: Vec::new(),
            error: None,
            passed: false,
        }
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn finalize(&mut self) {
        self.passed = self.error.is_none() && self.checks.iter().all(|c| c.passed);
    }

    /// 0 iff every declared check passed and nothing aborted.
    pub fn exit_code(&self) -> i32 {
        if self.error.is_some() {
            EXIT_RUNTIME
        } else if self.checks.iter().all(|c| c.passed) {
            0
        } else {
            EXIT_CHECKS_FAILED
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the canonical config text and the seed actually used.
pub fn config_digest(canonical: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update(b"\nseed=");
    h.update(seed.to_string().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
