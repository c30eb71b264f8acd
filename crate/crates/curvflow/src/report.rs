//! Diagnostics and report emission: JSON-lines trajectories and a single
//! final JSON document carrying the resolved configuration and a build
//! identifier.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::DiagnosticsRecord;

pub fn build_id() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Writes one JSON object per diagnostics sample.
pub fn write_jsonl(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Serializes the diagnostics stream to a string (used by the determinism
/// checks, which compare streams bytewise).
pub fn jsonl_string(records: &[DiagnosticsRecord]) -> Result<String> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).map_err(|e| Error::Io(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
pub struct FinalReport<'a, T: Serialize> {
    pub build: String,
    pub command: &'a str,
    pub status: &'a str,
    pub payload: T,
    /// Echo of the fully resolved configuration.
    pub config: &'a toml::Value,
}

pub fn write_final_report<T: Serialize>(
    path: &Path,
    command: &str,
    status: &str,
    payload: T,
    config: &toml::Value,
) -> Result<()> {
    let report = FinalReport {
        build: build_id(),
        command,
        status,
        payload,
        config,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

#[derive(Serialize)]
struct ErrorDocument {
    build: String,
    error_kind: String,
    message: String,
    exit_code: i32,
}

/// Machine-readable error JSON for failed runs.
pub fn error_json(err: &Error) -> String {
    let doc = ErrorDocument {
        build: build_id(),
        error_kind: error_kind(err).to_string(),
        message: err.to_string(),
        exit_code: err.exit_code(),
    };
    serde_json::to_string_pretty(&doc).unwrap_or_else(|_| format!("{{\"message\": \"{err}\"}}"))
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Domain(_) => "domain",
        Error::SingularMetric(_) => "singular-metric",
        Error::NumericalInstability(_) => "numerical-instability",
        Error::InvalidArgument(_) => "invalid-argument",
        Error::NotSpacelike { .. } => "not-spacelike",
        Error::NotAdmissible { .. } => "not-admissible",
        Error::DegenerateEigenframe(_) => "degenerate-eigenframe",
        Error::DegenerateGlobalTerm { .. } => "degenerate-global-term",
        Error::TimeStepUnderflow { .. } => "time-step-underflow",
        Error::NoConvergence(_) => "no-convergence",
        Error::EigenSolveFailure(_) => "eigen-solve-failure",
        Error::InsufficientData(_) => "insufficient-data",
        Error::NotSupported(_) => "not-supported",
        Error::Parse(_) => "parse",
        Error::Validation(_) => "validation",
        Error::Io(_) => "io",
    }
}
