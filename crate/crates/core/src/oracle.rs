//! Brute-force joint queue-length chain over `{0..K}^M` for small cells.
//!
//! Used to check the reduced chain and the measure formulas against the
//! exact coupled-queue process under the same attempt model.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::chain::{arrival_pmfs, slot_type_probs, ArrivalPmfs, PoissonPmf, SlotTypeProbs};
use crate::params::SlotDurations;
use crate::perf::{self, PerfError};
use crate::saturation::AttemptProfile;
use crate::solver::{self, SolverError, StationaryDist};

pub const MAX_STATES: usize = 1_000_000;
const DENSE_LIMIT: usize = 3_000;
const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("state space of {0} states exceeds the oracle limit")]
    StateSpaceTooLarge(u128),
    #[error("row {row} of the joint chain sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("sparse stationary iteration stalled at residual {0:e}")]
    NoConvergence(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointChain {
    m: usize,
    k: usize,
    /// Sparse rows: `(destination, probability)` sorted by destination.
    rows: Vec<Vec<(usize, f64)>>,
}

impl JointChain {
    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn buffer(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, state: usize) -> &[(usize, f64)] {
        &self.rows[state]
    }

    pub fn encode(&self, queues: &[usize]) -> usize {
        encode(queues, self.k)
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        decode(index, self.m, self.k)
    }

    pub fn prob(&self, from: &[usize], to: &[usize]) -> f64 {
        let dest = self.encode(to);
        self.rows[self.encode(from)]
            .iter()
            .find(|(d, _)| *d == dest)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut p = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                p[(i, j)] += v;
            }
        }
        p
    }
}

fn encode(queues: &[usize], k: usize) -> usize {
    queues.iter().rev().fold(0, |acc, &q| acc * (k + 1) + q)
}

fn decode(mut index: usize, m: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        out.push(index % (k + 1));
        index /= k + 1;
    }
    out
}

fn state_count(m: usize, k: usize) -> Result<usize, OracleError> {
    let count = (k as u128 + 1).checked_pow(m as u32).unwrap_or(u128::MAX);
    if count > MAX_STATES as u128 {
        return Err(OracleError::StateSpaceTooLarge(count));
    }
    Ok(count as usize)
}

/// `P(min(K, y + A) = v)` for one queue.
fn next_level_prob(pmf: &PoissonPmf, y: usize, v: usize, k: usize) -> f64 {
    if v < y {
        0.0
    } else if v < k {
        pmf.p((v - y) as i64)
    } else {
        pmf.upper_tail((k - y) as i64)
    }
}

/// Slot outcomes from a state: `(probability, arrival pmf, queue levels after
/// the departure)`.
fn outcomes<'a>(
    queues: &[usize],
    stp: &SlotTypeProbs,
    pmfs: &'a ArrivalPmfs,
) -> Vec<(f64, &'a PoissonPmf, Vec<usize>)> {
    let busy: Vec<usize> = (0..queues.len()).filter(|&i| queues[i] > 0).collect();
    let n = busy.len();
    let mut out = vec![(stp.p_idle[n], &pmfs.d, queues.to_vec())];
    if n >= 2 {
        out.push((stp.p_coll[n], &pmfs.c, queues.to_vec()));
    }
    if n >= 1 {
        // every non-empty queue is equally likely to be the one served
        let share = stp.p_succ[n] / n as f64;
        for &d in &busy {
            let mut after = queues.to_vec();
            after[d] -= 1;
            out.push((share, &pmfs.s, after));
        }
    }
    out
}

/// Builds the joint chain by enumerating, for every slot outcome, each
/// reachable destination vector and multiplying per-queue probabilities.
pub fn build_joint_chain(
    m: usize,
    k: usize,
    lambda: f64,
    profile: &AttemptProfile,
    slots: &SlotDurations,
) -> Result<JointChain, OracleError> {
    let states = state_count(m, k)?;
    let pmfs = arrival_pmfs(lambda, slots, k + 8);
    let stp = slot_type_probs(profile, m);
    let mut rows = Vec::with_capacity(states);
    for idx in 0..states {
        let queues = decode(idx, m, k);
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (p_outcome, pmf, base) in outcomes(&queues, &stp, &pmfs) {
            if p_outcome == 0.0 {
                continue;
            }
            // odometer over v_i in base_i..=K
            let mut v = base.clone();
            loop {
                let prob: f64 = (0..m).map(|i| next_level_prob(pmf, base[i], v[i], k)).product();
                if prob > 0.0 {
                    *acc.entry(encode(&v, k)).or_default() += p_outcome * prob;
                }
                let mut i = 0;
                while i < m {
                    if v[i] < k {
                        v[i] += 1;
                        break;
                    }
                    v[i] = base[i];
                    i += 1;
                }
                if i == m {
                    break;
                }
            }
        }
        let mut row: Vec<(usize, f64)> = acc.into_iter().collect();
        row.sort_by_key(|(d, _)| *d);
        let sum: f64 = row.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(OracleError::RowSum { row: idx, sum });
        }
        rows.push(row);
    }
    Ok(JointChain { m, k, rows })
}

/// Same chain built the other way round: enumerate per-queue arrival counts
/// (the last count standing for "K or more") and push each arrival vector
/// forward through `min(K, y + a)`.
pub fn build_joint_chain_by_convolution(
    m: usize,
    k: usize,
    lambda: f64,
    profile: &AttemptProfile,
    slots: &SlotDurations,
) -> Result<JointChain, OracleError> {
    let states = state_count(m, k)?;
    let pmfs = arrival_pmfs(lambda, slots, k + 8);
    let stp = slot_type_probs(profile, m);
    let mut rows = Vec::with_capacity(states);
    for idx in 0..states {
        let queues = decode(idx, m, k);
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (p_outcome, pmf, base) in outcomes(&queues, &stp, &pmfs) {
            // distribution over partial destination vectors, queue by queue
            let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), p_outcome)];
            for &y in &base {
                let room = k - y;
                let mut next = Vec::with_capacity(partial.len() * (room + 1));
                for (prefix, p) in &partial {
                    for a in 0..=room {
                        let w = if a < room {
                            pmf.p(a as i64)
                        } else {
                            pmf.upper_tail(a as i64)
                        };
                        let mut v = prefix.clone();
                        v.push(y + a);
                        next.push((v, p * w));
                    }
                }
                partial = next;
            }
            for (v, p) in partial {
                if p > 0.0 {
                    *acc.entry(encode(&v, k)).or_default() += p;
                }
            }
        }
        let mut row: Vec<(usize, f64)> = acc.into_iter().collect();
        row.sort_by_key(|(d, _)| *d);
        rows.push(row);
    }
    Ok(JointChain { m, k, rows })
}

fn sparse_stationary(chain: &JointChain) -> Result<Vec<f64>, OracleError> {
    let n = chain.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        for (i, row) in chain.rows.iter().enumerate() {
            for &(j, p) in row {
                next[j] += pi[i] * p;
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let delta = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if delta < 1e-14 {
            return Ok(pi);
        }
    }
    Err(OracleError::NoConvergence(f64::NAN))
}

/// Exact stationary quantities of the joint chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointSolution {
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    #[serde(skip)]
    pub pi: Vec<f64>,
    /// Distribution of the number of non-empty queues, `n = 0..=M`.
    pub p_n: Vec<f64>,
    pub gamma: f64,
    pub theta_agg: f64,
    pub theta_node: f64,
    pub w_bar: f64,
    /// `P(Q_l = 1 | N = n, Q_l > 0)`, `n = 1..=M`.
    pub q_exact: Vec<f64>,
    /// Queue-length marginal of every node.
    pub marginals: Vec<Vec<f64>>,
    /// Exact `(tagged level, # other non-empty)` distribution.
    #[serde(skip)]
    pub reduced: StationaryDist,
}

pub fn joint_stationary(
    chain: &JointChain,
    lambda: f64,
    profile: &AttemptProfile,
    slots: &SlotDurations,
) -> Result<JointSolution, OracleError> {
    let (m, k) = (chain.nodes(), chain.buffer());
    let pi = if chain.len() <= DENSE_LIMIT {
        solver::stationary_vector(&chain.to_dense())?
    } else {
        sparse_stationary(chain)?
    };

    let mut p_n = vec![0.0; m + 1];
    let mut one_and_busy = vec![0.0; m + 1];
    let mut busy = vec![0.0; m + 1];
    let mut marginals = vec![vec![0.0; k + 1]; m];
    let mut reduced = vec![0.0; (k + 1) * m];
    for (idx, &p) in pi.iter().enumerate() {
        let q = decode(idx, m, k);
        let n = q.iter().filter(|&&x| x > 0).count();
        p_n[n] += p;
        for (node, &level) in q.iter().enumerate() {
            marginals[node][level] += p;
        }
        if q[0] > 0 {
            busy[n] += p;
            if q[0] == 1 {
                one_and_busy[n] += p;
            }
        }
        let others = q[1..].iter().filter(|&&x| x > 0).count();
        reduced[q[0] * m + others] += p;
    }
    let q_exact = (1..=m)
        .map(|n| {
            if busy[n] > 0.0 {
                one_and_busy[n] / busy[n]
            } else {
                f64::NAN
            }
        })
        .collect();

    let stp = slot_type_probs(profile, m);
    let pmfs = arrival_pmfs(lambda, slots, k + 64);
    let gamma = perf::collision_probability(&p_n, profile)?;
    let (theta_agg, theta_node) = perf::throughput(&p_n, &stp, slots);
    let reduced = StationaryDist::new(m, k, reduced);
    let p_dep = perf::departure_distribution(&reduced, &stp, &pmfs)?;
    let delay = perf::delay(&p_dep, theta_node, lambda)?;

    Ok(JointSolution {
        m,
        k,
        lambda,
        pi,
        p_n,
        gamma,
        theta_agg,
        theta_node,
        w_bar: delay.w_bar,
        q_exact,
        marginals,
        reduced,
    })
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    ((approx - exact) / exact).abs()
}

/// Reduced-chain predictions against the exact joint chain at one load.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    pub tv_occupancy: f64,
    pub gamma_reduced: f64,
    pub gamma_exact: f64,
    pub gamma_rel_err: f64,
    pub theta_reduced: f64,
    pub theta_exact: f64,
    pub theta_rel_err: f64,
    pub w_bar_reduced: f64,
    pub w_bar_exact: f64,
    pub w_bar_rel_err: f64,
    pub q_reduced: Vec<f64>,
    pub q_exact: Vec<f64>,
    /// `max_n |q̃(n) - q(n)|` over `n` with defined exact value.
    pub q_max_gap: f64,
}

pub fn compare_reduced_vs_oracle(
    m: usize,
    k: usize,
    lambda: f64,
    profile: &AttemptProfile,
    slots: &SlotDurations,
) -> Result<Discrepancy, OracleError> {
    let (inputs, sol) = solver::solve_sdar_model(m, k, lambda, profile, slots)?;
    let reduced = perf::perf_report(&sol.pi, profile, &inputs.stp, &inputs.pmfs, slots, lambda)?;

    let chain = build_joint_chain(m, k, lambda, profile, slots)?;
    let exact = joint_stationary(&chain, lambda, profile, slots)?;

    let q_reduced = sol.q.as_slice().to_vec();
    let q_max_gap = q_reduced
        .iter()
        .zip(&exact.q_exact)
        .filter(|(_, e)| e.is_finite())
        .map(|(a, e)| (a - e).abs())
        .fold(0.0, f64::max);
    Ok(Discrepancy {
        m,
        k,
        lambda,
        tv_occupancy: total_variation(&reduced.p_n, &exact.p_n),
        gamma_reduced: reduced.gamma,
        gamma_exact: exact.gamma,
        gamma_rel_err: if m == 1 && exact.gamma == 0.0 {
            reduced.gamma.abs()
        } else {
            rel_err(reduced.gamma, exact.gamma)
        },
        theta_reduced: reduced.theta_agg,
        theta_exact: exact.theta_agg,
        theta_rel_err: rel_err(reduced.theta_agg, exact.theta_agg),
        w_bar_reduced: reduced.w_bar,
        w_bar_exact: exact.w_bar,
        w_bar_rel_err: rel_err(reduced.w_bar, exact.w_bar),
        q_reduced,
        q_exact: exact.q_exact,
        q_max_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Buffer, Scenario};
    use crate::saturation::AttemptModel;

    fn setup(m: usize) -> (AttemptProfile, SlotDurations) {
        let s = Scenario::homogeneous(m, 1.0, Buffer::Finite(1));
        (
            AttemptProfile::compute(m, &s.mac, AttemptModel::FiniteRetry).unwrap(),
            s.slot_durations(),
        )
    }

    #[test]
    fn single_node_unit_buffer_zero_rate() {
        let (profile, slots) = setup(1);
        let chain = build_joint_chain(1, 1, 0.0, &profile, &slots).unwrap();
        let b1 = profile.beta(1);
        assert!((chain.prob(&[1], &[0]) - b1).abs() < 1e-15);
        assert!((chain.prob(&[1], &[1]) - (1.0 - b1)).abs() < 1e-15);
    }

    #[test]
    fn two_nodes_both_busy_zero_rate() {
        let (profile, slots) = setup(2);
        let chain = build_joint_chain(2, 1, 0.0, &profile, &slots).unwrap();
        let stp = slot_type_probs(&profile, 2);
        assert!((chain.prob(&[1, 1], &[0, 1]) - stp.p_succ[2] / 2.0).abs() < 1e-15);
        assert!((chain.prob(&[1, 1], &[1, 0]) - stp.p_succ[2] / 2.0).abs() < 1e-15);
        assert!((chain.prob(&[1, 1], &[1, 1]) - (1.0 - stp.p_succ[2])).abs() < 1e-15);
        assert_eq!(chain.prob(&[1, 1], &[0, 0]), 0.0);
    }

    #[test]
    fn rows_sum_to_one() {
        let (profile, slots) = setup(2);
        let chain = build_joint_chain(2, 2, 30.0, &profile, &slots).unwrap();
        for i in 0..chain.len() {
            let s: f64 = chain.row(i).iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_constructions_agree() {
        for &(m, k, lambda) in &[(2, 2, 30.0), (3, 2, 80.0), (2, 3, 200.0), (1, 4, 50.0)] {
            let (profile, slots) = setup(m);
            let a = build_joint_chain(m, k, lambda, &profile, &slots).unwrap();
            let b = build_joint_chain_by_convolution(m, k, lambda, &profile, &slots).unwrap();
            let diff = (a.to_dense() - b.to_dense()).amax();
            assert!(diff < 1e-12, "m={m} k={k}: {diff:e}");
        }
    }

    #[test]
    fn too_large_is_rejected() {
        let (profile, slots) = setup(12);
        assert!(matches!(
            build_joint_chain(12, 5, 1.0, &profile, &slots),
            Err(OracleError::StateSpaceTooLarge(_))
        ));
    }

    #[test]
    fn exchangeable_stationary_distribution() {
        let (profile, slots) = setup(3);
        let chain = build_joint_chain(3, 2, 60.0, &profile, &slots).unwrap();
        let sol = joint_stationary(&chain, 60.0, &profile, &slots).unwrap();
        for node in 1..3 {
            for (a, b) in sol.marginals[0].iter().zip(&sol.marginals[node]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // permutation invariance of the full vector
        for idx in 0..chain.len() {
            let mut q = chain.decode(idx);
            q.rotate_left(1);
            assert!((sol.pi[idx] - sol.pi[chain.encode(&q)]).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_rate_concentrates_at_zero() {
        let (profile, slots) = setup(2);
        let chain = build_joint_chain(2, 2, 1e-3, &profile, &slots).unwrap();
        let sol = joint_stationary(&chain, 1e-3, &profile, &slots).unwrap();
        assert!(sol.pi[0] > 0.999);
    }

    #[test]
    fn single_node_reduction_is_exact() {
        let (profile, slots) = setup(1);
        for k in [1, 3, 6] {
            let d = compare_reduced_vs_oracle(1, k, 150.0, &profile, &slots).unwrap();
            assert!(d.tv_occupancy < 1e-10, "k={k}: {}", d.tv_occupancy);
            assert!(d.w_bar_rel_err < 1e-8);
        }
    }
}
