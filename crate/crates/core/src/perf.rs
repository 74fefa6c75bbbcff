//! Performance measures from the reduced-chain stationary distribution:
//! occupancy, collision probability, throughput, departure distribution and
//! mean delay via the finite-buffer level-crossing argument.

use serde::Serialize;
use thiserror::Error;

use crate::chain::{ArrivalPmfs, SlotTypeProbs};
use crate::params::SlotDurations;
use crate::saturation::AttemptProfile;
use crate::solver::StationaryDist;

const FLOW_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("no attempts: all stationary mass sits at n = 0")]
    NoAttempts,
    #[error("no departures from the tagged queue")]
    NoDepartures,
    #[error("throughput {theta} exceeds arrival rate {lambda}")]
    InconsistentThroughput { theta: f64, lambda: f64 },
    #[error("arrival rate must be positive")]
    NonPositiveRate,
}

/// `p̃(n) = π̃(0, n) + Σ_{j=1..K} π̃(j, n-1)`, `n = 0..=M`.
pub fn occupancy_distribution(pi: &StationaryDist) -> Vec<f64> {
    let m = pi.nodes();
    (0..=m)
        .map(|n| {
            let empty_tagged = if n < m { pi.get(0, n) } else { 0.0 };
            let busy_tagged: f64 = if n >= 1 {
                (1..=pi.buffer()).map(|j| pi.get(j, n - 1)).sum()
            } else {
                0.0
            };
            empty_tagged + busy_tagged
        })
        .collect()
}

fn expected_attempts(profile: &AttemptProfile, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * profile.beta(n)
    }
}

/// `Σ p(n) E[C|n] / Σ p(n) E[A|n]`.
pub fn collision_probability(p_n: &[f64], profile: &AttemptProfile) -> Result<f64, PerfError> {
    let mut attempts = 0.0;
    let mut collisions = 0.0;
    for (n, &p) in p_n.iter().enumerate().skip(1) {
        let a = expected_attempts(profile, n);
        let beta = profile.beta(n);
        attempts += p * a;
        collisions += p * a * (1.0 - (1.0 - beta).powi(n as i32 - 1));
    }
    if attempts <= 0.0 {
        return Err(PerfError::NoAttempts);
    }
    Ok(collisions / attempts)
}

/// Aggregate and per-node throughput (packets/s):
/// `Σ p(n) E[S|n] / Σ p(n) E[L|n]`.
pub fn throughput(p_n: &[f64], stp: &SlotTypeProbs, slots: &SlotDurations) -> (f64, f64) {
    let m = p_n.len() - 1;
    let mut successes = 0.0;
    let mut duration = 0.0;
    for (n, &p) in p_n.iter().enumerate() {
        successes += p * stp.p_succ[n];
        duration += p * (slots.sigma() + stp.p_coll[n] * slots.t_c() + stp.p_succ[n] * slots.t_s());
    }
    let theta = successes / duration;
    (theta, theta / m as f64)
}

/// Distribution of the number left behind by a tagged-queue departure,
/// `j = 0..=K-1`; the last entry is the complement of the others.
pub fn departure_distribution(
    pi: &StationaryDist,
    stp: &SlotTypeProbs,
    pmfs: &ArrivalPmfs,
) -> Result<Vec<f64>, PerfError> {
    let m = pi.nodes();
    let k = pi.buffer();
    let rate = |i: usize| -> f64 { (0..m).map(|n| pi.get(i, n) * stp.p_succ[n + 1] / (n + 1) as f64).sum() };
    let rates: Vec<f64> = (0..=k).map(|i| if i == 0 { 0.0 } else { rate(i) }).collect();
    let total: f64 = rates.iter().sum();
    if total <= 0.0 {
        return Err(PerfError::NoDepartures);
    }
    let mut p_dep = Vec::with_capacity(k);
    for j in 0..k.saturating_sub(1) {
        let num: f64 = (1..=j + 1).map(|i| rates[i] * pmfs.s.p((j + 1 - i) as i64)).sum();
        p_dep.push(num / total);
    }
    let head: f64 = p_dep.iter().sum();
    p_dep.push((1.0 - head).max(0.0));
    Ok(p_dep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayMeasures {
    /// Fraction of time the tagged queue holds `j` packets, `j = 0..=K`.
    pub alpha: Vec<f64>,
    pub q_bar: f64,
    /// Mean sojourn time (s).
    pub w_bar: f64,
    /// Blocking probability `α(K)`.
    pub block_prob: f64,
}

/// Mean queue length and delay from the departure distribution, the
/// per-node throughput and the offered rate.
pub fn delay(p_dep: &[f64], theta_node: f64, lambda: f64) -> Result<DelayMeasures, PerfError> {
    if lambda <= 0.0 {
        return Err(PerfError::NonPositiveRate);
    }
    let k = p_dep.len();
    let ratio = theta_node / lambda;
    if ratio > 1.0 + FLOW_TOL {
        return Err(PerfError::InconsistentThroughput {
            theta: theta_node,
            lambda,
        });
    }
    let block_prob = (1.0 - ratio).max(0.0);
    let mut alpha: Vec<f64> = p_dep.iter().map(|p| p * (1.0 - block_prob)).collect();
    alpha.push(block_prob);
    debug_assert_eq!(alpha.len(), k + 1);
    let q_bar: f64 = alpha.iter().enumerate().map(|(j, a)| j as f64 * a).sum();
    Ok(DelayMeasures {
        alpha,
        q_bar,
        w_bar: q_bar / theta_node,
        block_prob,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfReport {
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    pub p_n: Vec<f64>,
    pub gamma: f64,
    pub theta_agg: f64,
    pub theta_node: f64,
    pub block_prob: f64,
    pub q_bar: f64,
    pub w_bar: f64,
    pub p_dep: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl PerfReport {
    pub const CSV_HEADER: &'static str = "m,k,lambda,gamma,theta_node,w_bar,q_bar,block_prob";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.m, self.k, self.lambda, self.gamma, self.theta_node, self.w_bar, self.q_bar, self.block_prob
        )
    }
}

/// All measures for one solved `(M, K, λ)` point.
pub fn perf_report(
    pi: &StationaryDist,
    profile: &AttemptProfile,
    stp: &SlotTypeProbs,
    pmfs: &ArrivalPmfs,
    slots: &SlotDurations,
    lambda: f64,
) -> Result<PerfReport, PerfError> {
    let p_n = occupancy_distribution(pi);
    let gamma = collision_probability(&p_n, profile)?;
    let (theta_agg, theta_node) = throughput(&p_n, stp, slots);
    let p_dep = departure_distribution(pi, stp, pmfs)?;
    let d = delay(&p_dep, theta_node, lambda)?;
    Ok(PerfReport {
        m: pi.nodes(),
        k: pi.buffer(),
        lambda,
        p_n,
        gamma,
        theta_agg,
        theta_node,
        block_prob: d.block_prob,
        q_bar: d.q_bar,
        w_bar: d.w_bar,
        p_dep,
        alpha: d.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{arrival_pmfs, slot_type_probs};
    use crate::params::{Buffer, MacParams, Scenario};
    use crate::saturation::{saturation_curve, AttemptModel};

    fn point_mass(m: usize, k: usize, level: usize, others: usize) -> StationaryDist {
        let mut pi = vec![0.0; (k + 1) * m];
        pi[level * m + others] = 1.0;
        StationaryDist::new(m, k, pi)
    }

    #[test]
    fn occupancy_extremes() {
        let p = occupancy_distribution(&point_mass(3, 4, 0, 0));
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
        let p = occupancy_distribution(&point_mass(3, 4, 4, 2));
        assert_eq!(p, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn collision_probability_extremes() {
        let profile = AttemptProfile::compute(5, &MacParams::default(), AttemptModel::FiniteRetry).unwrap();
        assert_eq!(
            collision_probability(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0], &profile).unwrap(),
            0.0
        );
        let g = collision_probability(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], &profile).unwrap();
        assert!((g - profile.gamma(5)).abs() < 1e-12);
        assert_eq!(
            collision_probability(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &profile).unwrap_err(),
            PerfError::NoAttempts
        );
    }

    #[test]
    fn throughput_extremes() {
        let s = Scenario::homogeneous(6, 1.0, Buffer::Finite(2));
        let slots = s.slot_durations();
        let profile = AttemptProfile::compute(6, &s.mac, AttemptModel::FiniteRetry).unwrap();
        let stp = slot_type_probs(&profile, 6);
        let mut p = vec![0.0; 7];
        p[6] = 1.0;
        let (theta, _) = throughput(&p, &stp, &slots);
        let curve = saturation_curve(&profile, &slots, 6);
        assert!((theta - curve.theta(6)).abs() < 1e-9);
        let mut p = vec![0.0; 7];
        p[0] = 1.0;
        assert_eq!(throughput(&p, &stp, &slots).0, 0.0);
    }

    #[test]
    fn unit_buffer_departures_leave_empty() {
        let s = Scenario::homogeneous(2, 10.0, Buffer::Finite(1));
        let slots = s.slot_durations();
        let profile = AttemptProfile::compute(2, &s.mac, AttemptModel::FiniteRetry).unwrap();
        let stp = slot_type_probs(&profile, 2);
        let pmfs = arrival_pmfs(10.0, &slots, 70);
        let pi = StationaryDist::new(2, 1, vec![0.4, 0.1, 0.3, 0.2]);
        assert_eq!(departure_distribution(&pi, &stp, &pmfs).unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_rate_departures_leave_empty() {
        let s = Scenario::homogeneous(2, 0.0, Buffer::Finite(3));
        let slots = s.slot_durations();
        let profile = AttemptProfile::compute(2, &s.mac, AttemptModel::FiniteRetry).unwrap();
        let stp = slot_type_probs(&profile, 2);
        let pmfs = arrival_pmfs(0.0, &slots, 70);
        let p = departure_distribution(&point_mass(2, 3, 1, 1), &stp, &pmfs).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        assert_eq!(
            departure_distribution(&point_mass(2, 3, 0, 1), &stp, &pmfs).unwrap_err(),
            PerfError::NoDepartures
        );
    }

    #[test]
    fn delay_without_blocking() {
        let d = delay(&[0.5, 0.3, 0.2], 4.0, 4.0).unwrap();
        assert_eq!(d.block_prob, 0.0);
        assert!((d.q_bar - 0.7).abs() < 1e-15);
        assert!((d.w_bar - 0.7 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn delay_unit_buffer_two_point() {
        let d = delay(&[1.0], 3.0, 4.0).unwrap();
        assert!((d.alpha[1] - 0.25).abs() < 1e-15);
        assert!((d.alpha[0] - 0.75).abs() < 1e-15);
        assert!((d.q_bar - 0.25).abs() < 1e-15);
        assert!((d.w_bar - 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn delay_rejects_excess_throughput() {
        assert!(matches!(
            delay(&[1.0], 4.1, 4.0),
            Err(PerfError::InconsistentThroughput { .. })
        ));
        // rounding-level excess clamps to zero blocking
        let d = delay(&[1.0], 4.0 * (1.0 + 1e-12), 4.0).unwrap();
        assert_eq!(d.block_prob, 0.0);
    }
}
