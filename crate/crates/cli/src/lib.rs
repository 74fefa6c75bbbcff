//! Experiment runner behind the `sdar` binary.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};

use sdar_core::analysis::AnalysisError;
use sdar_core::oracle::OracleError;
use sdar_core::params::ParamError;
use sdar_sim::{ReportError, SimError};

pub use config::{EngineChoice, Format, RunConfig};

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad or inconsistent configuration (exit 2).
    Config(String),
    /// A numerical procedure failed (exit 3).
    Numeric(String),
    /// Reading or writing files failed (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Param(p) => p.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::StateSpaceTooLarge(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Param(p) => p.into(),
            SimError::InvalidHorizon(_) | SimError::InvalidWarmup(_) => CliError::Config(e.to_string()),
            SimError::Saturation(_) => CliError::Numeric(e.to_string()),
            SimError::Trace(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

/// One output file produced by a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub content: String,
}

impl Artifact {
    pub fn new(file_name: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            file_name: file_name.into(),
            content: content.into(),
        }
    }
}

/// Writes artifacts into `dir` (created if needed) and returns their paths.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.file_name);
            std::fs::write(&path, &a.content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Numeric(format!("cannot serialise output: {e}")))
}
