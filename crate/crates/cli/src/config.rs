//! JSON run configuration.
//!
//! The schema is flat: scenario fields at the top level, plus optional
//! `sweep`, `simulate` and `output` blocks.
//!
//! ```json
//! {
//!   "command": "analyze",
//!   "m": 10,
//!   "lambda": 20.0,
//!   "buffer": 5,
//!   "payload_bits": 8000,
//!   "access_mode": "basic",
//!   "attempt_model": "finite_retry",
//!   "sweep": { "start": 5, "stop": 100, "step": 5 },
//!   "simulate": { "engine": "both", "seed": 1, "horizon": 300 },
//!   "output": { "dir": "out", "format": "csv" }
//! }
//! ```
//!
//! Use `"lambdas": [..]` instead of `"lambda"` for per-node rates, and
//! `"buffer": "infinite"` for unbounded queues. `phy` and `mac` default to
//! 802.11b.

use std::path::{Path, PathBuf};

use sdar_core::params::{AccessMode, Buffer, MacParams, PhyParams, Scenario};
use sdar_core::saturation::AttemptModel;
use serde::Deserialize;

use crate::CliError;

fn default_payload() -> u32 {
    8000
}

fn default_access() -> AccessMode {
    AccessMode::Basic
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand to run when none is given on the command line.
    #[serde(default)]
    pub command: Option<CommandName>,
    pub m: usize,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    pub buffer: Buffer,
    #[serde(default = "default_payload")]
    pub payload_bits: u32,
    #[serde(default = "default_access")]
    pub access_mode: AccessMode,
    #[serde(default)]
    pub phy: PhyParams,
    #[serde(default)]
    pub mac: MacParams,
    #[serde(default)]
    pub attempt_model: AttemptModel,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Saturation,
    Analyze,
    Simulate,
    Sweep,
    Validate,
    DumpChain,
}

/// Either an explicit list or an inclusive arithmetic grid.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SweepConfig {
    List { lambdas: Vec<f64> },
    Grid { start: f64, stop: f64, step: f64 },
}

impl SweepConfig {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let pts = match self {
            SweepConfig::List { lambdas } => lambdas.clone(),
            SweepConfig::Grid { start, stop, step } => {
                if !step.is_finite() || *step <= 0.0 || stop < start {
                    return Err(CliError::Config(format!(
                        "sweep grid needs step > 0 and stop >= start (got {start}..{stop} by {step})"
                    )));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|i| start + i as f64 * step).collect()
            }
        };
        if pts.is_empty() {
            return Err(CliError::Config("sweep has no points".into()));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    #[default]
    Sdar,
    Dcf,
    Both,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub engine: EngineChoice,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub warmup_fraction: Option<f64>,
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The scenario at the configured rate(s).
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let lambdas = match (&self.lambda, &self.lambdas) {
            (Some(l), None) => vec![*l; self.m],
            (None, Some(ls)) => ls.clone(),
            (None, None) => {
                // sweep-only configs may omit the rate
                vec![0.0; self.m]
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either `lambda` or `lambdas`, not both".into()));
            }
        };
        Ok(self.scenario_with(lambdas))
    }

    pub fn scenario_with(&self, lambdas: Vec<f64>) -> Scenario {
        Scenario {
            m: self.m,
            lambdas,
            buffer: self.buffer,
            payload_bits: self.payload_bits,
            access_mode: self.access_mode,
            phy: self.phy.clone(),
            mac: self.mac.clone(),
        }
    }
}
