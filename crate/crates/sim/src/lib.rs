//! Event-driven single-cell simulators.
//!
//! Two MAC engines share arrival streams, buffer semantics and statistics:
//!
//! * [`run_sdar`] — state-dependent contention. At every channel-slot
//!   boundary each non-empty node draws a geometric backoff whose
//!   per-slot attempt probability depends only on how many nodes are
//!   non-empty. Arrivals are admitted at the next boundary.
//! * [`run_dcf`] — reference CSMA/CA with uniform backoff windows,
//!   binary exponential growth, frozen counters and a retry limit.
//!
//! All times inside the engines are integer nanoseconds.

mod common;
pub mod dcf;
pub mod event;
pub mod report;
pub mod rng;
pub mod sdar;
pub mod stats;

use sdar_core::params::ParamError;
use sdar_core::saturation::{AttemptModel, SaturationError};
use thiserror::Error;

pub use dcf::{run_dcf, run_dcf_traced};
pub use report::{empirical_report, EmpiricalReport, ReportError};
pub use sdar::{run_sdar, run_sdar_traced};
pub use stats::{Engine, NodeStats, SimStats, SlotTally};

pub const DEFAULT_WARMUP_FRACTION: f64 = 0.05;
pub const DEFAULT_BACKLOG_SAMPLES: usize = 1000;
/// Joint-state visit counts are kept when `(K+1)^M` is at most this.
pub const STATE_VISIT_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub seed: u64,
    pub horizon_s: f64,
    /// Leading fraction of the horizon excluded from all tallies.
    pub warmup_fraction: f64,
    /// Attempt law used by the SDAR engine.
    pub attempt_model: AttemptModel,
    /// Number of backlog samples over the horizon.
    pub backlog_samples: usize,
}

impl SimOptions {
    pub fn new(seed: u64, horizon_s: f64) -> Self {
        Self {
            seed,
            horizon_s,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            attempt_model: AttemptModel::default(),
            backlog_samples: DEFAULT_BACKLOG_SAMPLES,
        }
    }

    fn validate(&self) -> Result<(u64, u64), SimError> {
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(SimError::InvalidHorizon(self.horizon_s));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::InvalidWarmup(self.warmup_fraction));
        }
        let horizon = (self.horizon_s * 1e9).round() as u64;
        let warmup = (self.horizon_s * self.warmup_fraction * 1e9).round() as u64;
        Ok((horizon, warmup))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("warm-up fraction must lie in [0, 1), got {0}")]
    InvalidWarmup(f64),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Saturation(#[from] SaturationError),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}
