//! Turns raw simulation counters into the same measures the analysis
//! produces.

use serde::Serialize;
use thiserror::Error;

use crate::stats::{Engine, SimStats};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("the run recorded no transmission attempts")]
    EmptyRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub gamma: f64,
    /// Departures per second.
    pub theta: f64,
    pub w_bar: f64,
    pub service_mean: f64,
    pub block_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalReport {
    pub engine: Engine,
    pub m: usize,
    pub seed: u64,
    pub measured_s: f64,
    pub gamma: f64,
    pub theta_agg: f64,
    pub theta_node: f64,
    pub w_bar: f64,
    pub block_prob: f64,
    pub empty_fraction: f64,
    pub per_node: Vec<NodeReport>,
    /// `P(success | n non-empty)` from the slot tallies, `n = 0..=M`
    /// (`None` where no slot was observed).
    pub slot_success_freq: Vec<Option<f64>>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

pub fn empirical_report(stats: &SimStats) -> Result<EmpiricalReport, ReportError> {
    let attempts = stats.total_attempts();
    if attempts == 0 {
        return Err(ReportError::EmptyRun);
    }
    let t = stats.measured_s();
    let successes = stats.total_successes() as f64;
    let delay: f64 = stats.nodes.iter().map(|n| n.delay_sum).sum();
    let offered: u64 = stats.nodes.iter().map(|n| n.accepted + n.blocked).sum();
    let blocked: u64 = stats.nodes.iter().map(|n| n.blocked).sum();
    let per_node = stats
        .nodes
        .iter()
        .map(|n| NodeReport {
            gamma: if n.attempts > 0 {
                n.collisions as f64 / n.attempts as f64
            } else {
                f64::NAN
            },
            theta: n.successes as f64 / t,
            w_bar: ratio(n.delay_sum, n.successes as f64),
            service_mean: ratio(n.service_sum, n.successes as f64),
            block_prob: ratio(n.blocked as f64, (n.accepted + n.blocked) as f64),
        })
        .collect();
    let theta_agg = successes / t;
    Ok(EmpiricalReport {
        engine: stats.engine,
        m: stats.m,
        seed: stats.seed,
        measured_s: t,
        gamma: stats.total_collisions() as f64 / attempts as f64,
        theta_agg,
        theta_node: theta_agg / stats.m as f64,
        w_bar: ratio(delay, successes),
        block_prob: if offered > 0 {
            blocked as f64 / offered as f64
        } else {
            0.0
        },
        empty_fraction: stats.empty_time / t,
        per_node,
        slot_success_freq: stats
            .slot_tally
            .iter()
            .map(|s| (s.total() > 0).then(|| s.success as f64 / s.total() as f64))
            .collect(),
    })
}

/// Ordinary least-squares line through `(x, y)` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trend {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    /// Residual degrees of freedom (`samples - 2`).
    pub dof: usize,
}

pub fn linear_trend(samples: &[(f64, f64)]) -> Option<Trend> {
    let n = samples.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = samples.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = samples.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = samples.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = samples.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = samples.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = n - 2;
    Some(Trend {
        slope,
        intercept,
        slope_se: (sse / dof as f64 / sxx).sqrt(),
        dof,
    })
}
