//! Reduced-state chain `(tagged queue length, # non-empty non-tagged nodes)`:
//! per-slot arrival pmfs, slot-type probabilities, the `A_j`/`B_j` blocks and
//! the finite-buffer transition matrix.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::params::SlotDurations;
use crate::saturation::AttemptProfile;

/// Extra pmf terms stored past the buffer size.
pub const PMF_HEADROOM: usize = 64;
const ROW_SUM_TOL: f64 = 1e-9;
const CLAMP_TOL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("row {row} sums to {sum} (deviation {deviation:e})")]
    RowSumViolation { row: usize, sum: f64, deviation: f64 },
    #[error("entry ({row}, {col}) is negative: {value:e}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("q({n}) = {value} is outside (0, 1]")]
    InvalidQ { n: usize, value: f64 },
    #[error("q vector has length {got}, expected {expected}")]
    QLength { expected: usize, got: usize },
    #[error("blocks cover levels up to {have}, buffer of {need} requested")]
    InsufficientBlocks { have: usize, need: usize },
    #[error("buffer size must be at least 1")]
    ZeroBuffer,
}

/// Poisson pmf of the number of arrivals during one channel slot, stored up
/// to `j_max` with the remaining mass kept as a separate tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonPmf {
    mean: f64,
    pmf: Vec<f64>,
    beyond: f64,
    one_minus_p0: f64,
}

impl PoissonPmf {
    pub fn new(mean: f64, j_max: usize) -> Self {
        let mut pmf = Vec::with_capacity(j_max + 1);
        if mean == 0.0 {
            pmf.push(1.0);
            pmf.resize(j_max + 1, 0.0);
        } else {
            let log_mean = mean.ln();
            let mut log_p = -mean;
            pmf.push(log_p.exp());
            for j in 1..=j_max {
                log_p += log_mean - (j as f64).ln();
                pmf.push(log_p.exp());
            }
        }
        let stored: f64 = pmf.iter().rev().sum();
        Self {
            mean,
            pmf,
            beyond: (1.0 - stored).max(0.0),
            one_minus_p0: -(-mean).exp_m1(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn j_max(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `P(A = j)`, zero for negative `j`.
    pub fn p(&self, j: i64) -> f64 {
        if j < 0 {
            0.0
        } else {
            self.pmf.get(j as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn p0(&self) -> f64 {
        self.pmf[0]
    }

    /// `1 - P(A = 0)` without cancellation.
    pub fn one_minus_p0(&self) -> f64 {
        self.one_minus_p0
    }

    /// Mass beyond `j_max`.
    pub fn beyond(&self) -> f64 {
        self.beyond
    }

    /// `P(A >= j)`.
    pub fn upper_tail(&self, j: i64) -> f64 {
        if j <= 0 {
            return 1.0;
        }
        let j = j as usize;
        if j > self.j_max() {
            return self.beyond;
        }
        self.pmf[j..].iter().rev().sum::<f64>() + self.beyond
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pmf
    }
}

/// Arrival pmfs for idle (`d`), success (`s`) and collision (`c`) slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalPmfs {
    pub d: PoissonPmf,
    pub s: PoissonPmf,
    pub c: PoissonPmf,
}

pub fn arrival_pmfs(lambda: f64, slots: &SlotDurations, j_max: usize) -> ArrivalPmfs {
    ArrivalPmfs {
        d: PoissonPmf::new(lambda * slots.l_idle(), j_max),
        s: PoissonPmf::new(lambda * slots.l_succ(), j_max),
        c: PoissonPmf::new(lambda * slots.l_coll(), j_max),
    }
}

/// Truncation point for a buffer of `k` packets at per-slot mean `max_mean`.
pub fn default_j_max(k: usize, max_mean: f64) -> usize {
    let spread = max_mean + 20.0 * max_mean.sqrt();
    (k + PMF_HEADROOM).max(spread.ceil() as usize + PMF_HEADROOM)
}

/// Slot-type probabilities conditioned on `n` non-empty nodes, `n = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTypeProbs {
    pub p_idle: Vec<f64>,
    pub p_succ: Vec<f64>,
    pub p_coll: Vec<f64>,
}

impl SlotTypeProbs {
    pub fn max_nodes(&self) -> usize {
        self.p_idle.len() - 1
    }
}

pub fn slot_type_probs(profile: &AttemptProfile, m: usize) -> SlotTypeProbs {
    let mut stp = SlotTypeProbs {
        p_idle: vec![1.0],
        p_succ: vec![0.0],
        p_coll: vec![0.0],
    };
    for n in 1..=m {
        let beta = profile.beta(n);
        let p_idle = (1.0 - beta).powi(n as i32);
        let p_succ = n as f64 * beta * (1.0 - beta).powi(n as i32 - 1);
        stp.p_idle.push(p_idle);
        stp.p_succ.push(p_succ);
        stp.p_coll.push(1.0 - p_idle - p_succ);
    }
    stp
}

pub(crate) fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `C(M-n-1, k-n) (1-x0)^{k-n} x0^{M-k-1}`: of the `M-n-1` empty non-tagged
/// queues exactly `k-n` receive arrivals.
fn fill_weight(m: usize, n: usize, k: usize, pmf: &PoissonPmf) -> f64 {
    let (m, n, k) = (m as i64, n as i64, k as i64);
    let c = binomial(m - n - 1, k - n);
    if c == 0.0 {
        return 0.0;
    }
    c * pmf.one_minus_p0().powi((k - n) as i32) * pmf.p0().powi((m - k - 1) as i32)
}

/// Weight difference carried by the unknown `q`: the departing non-tagged
/// queue empties (`q s(0)`) instead of staying non-empty. Written as
/// `C(M-n-1, k-n+1)(1-s0)^{k-n+1}s0^{M-k-1} - s0 C(M-n-1, k-n)(1-s0)^{k-n}s0^{M-k-1}`,
/// each product dropped when its binomial vanishes, so no negative power of
/// `1 - s0` is ever formed.
fn emptying_weight(m: usize, n: usize, k: usize, s: &PoissonPmf) -> f64 {
    let (mi, ni, ki) = (m as i64, n as i64, k as i64);
    let c_up = binomial(mi - ni - 1, ki - ni + 1);
    let up = if c_up == 0.0 {
        0.0
    } else {
        c_up * s.one_minus_p0().powi((ki - ni + 1) as i32) * s.p0().powi((mi - ki - 1) as i32)
    };
    up - s.p0() * fill_weight(m, n, k, s)
}

/// Arrival-count weights for one tagged-queue increment `j` (or the tail
/// `j >= J`): idle, collision and success masses, plus the success mass at
/// the shifted index used by a tagged departure.
#[derive(Debug, Clone, Copy)]
struct Increment {
    d: f64,
    c: f64,
    s: f64,
    s_next: f64,
}

impl Increment {
    fn point(pmfs: &ArrivalPmfs, j: i64) -> Self {
        Self {
            d: pmfs.d.p(j),
            c: pmfs.c.p(j),
            s: pmfs.s.p(j),
            s_next: pmfs.s.p(j + 1),
        }
    }

    fn tail(pmfs: &ArrivalPmfs, j: i64) -> Self {
        Self {
            d: pmfs.d.upper_tail(j),
            c: pmfs.c.upper_tail(j),
            s: pmfs.s.upper_tail(j),
            s_next: pmfs.s.upper_tail(j + 1),
        }
    }
}

/// Pair of `M x M` matrices `(X^(0), X^(1))`; the assembled block is
/// `X^(0) + Δ_q X^(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPair {
    pub fixed: DMatrix<f64>,
    pub q_part: DMatrix<f64>,
}

impl BlockPair {
    fn zeros(m: usize) -> Self {
        Self {
            fixed: DMatrix::zeros(m, m),
            q_part: DMatrix::zeros(m, m),
        }
    }
}

/// The `A_j` (tagged queue empty) and `B_j` (tagged queue non-empty) blocks
/// split into their `q`-free and `q`-linear parts.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    m: usize,
    levels: usize,
    a: Vec<BlockPair>,
    b: Vec<BlockPair>,
    a_tail: Vec<BlockPair>,
    b_tail: Vec<BlockPair>,
}

impl BlockSet {
    pub fn nodes(&self) -> usize {
        self.m
    }

    /// Largest buffer size these blocks can assemble.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `A_j`, `0 <= j <= levels`.
    pub fn a(&self, j: usize) -> &BlockPair {
        &self.a[j]
    }

    /// `B_j`, `-1 <= j <= levels`.
    pub fn b(&self, j: i64) -> &BlockPair {
        &self.b[(j + 1) as usize]
    }

    /// `Σ_{i >= j} A_i`, `0 <= j <= levels + 1`.
    pub fn a_tail(&self, j: usize) -> &BlockPair {
        &self.a_tail[j]
    }

    /// `Σ_{i >= j} B_i`, `0 <= j <= levels + 1`.
    pub fn b_tail(&self, j: usize) -> &BlockPair {
        &self.b_tail[j]
    }
}

fn a_entries(m: usize, n: usize, k: usize, stp: &SlotTypeProbs, pmfs: &ArrivalPmfs, w: Increment) -> (f64, f64) {
    let fixed = stp.p_idle[n] * w.d * fill_weight(m, n, k, &pmfs.d)
        + stp.p_coll[n] * w.c * fill_weight(m, n, k, &pmfs.c)
        + stp.p_succ[n] * w.s * fill_weight(m, n, k, &pmfs.s);
    let q_part = if n == 0 {
        0.0
    } else {
        stp.p_succ[n] * w.s * emptying_weight(m, n, k, &pmfs.s)
    };
    (fixed, q_part)
}

fn b_entries(m: usize, n: usize, k: usize, stp: &SlotTypeProbs, pmfs: &ArrivalPmfs, w: Increment) -> (f64, f64) {
    let busy = n + 1;
    let fill_s = fill_weight(m, n, k, &pmfs.s);
    // Tagged departure w.p. 1/(n+1): its increment is one less than the
    // arrivals, hence s(j+1); otherwise a non-tagged node departs.
    let tagged_share = stp.p_succ[busy] / busy as f64;
    let fixed = stp.p_idle[busy] * w.d * fill_weight(m, n, k, &pmfs.d)
        + stp.p_coll[busy] * w.c * fill_weight(m, n, k, &pmfs.c)
        + stp.p_succ[busy] * w.s * fill_s
        + tagged_share * fill_s * (w.s_next - w.s);
    let q_part = if n == 0 {
        0.0
    } else {
        n as f64 * tagged_share * w.s * emptying_weight(m, n, k, &pmfs.s)
    };
    (fixed, q_part)
}

fn fill_pair(m: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> BlockPair {
    let mut pair = BlockPair::zeros(m);
    for n in 0..m {
        for k in 0..m {
            let (fixed, q_part) = f(n, k);
            pair.fixed[(n, k)] = fixed;
            pair.q_part[(n, k)] = q_part;
        }
    }
    pair
}

/// Builds explicit blocks `A_0..=A_levels`, `B_-1..=B_levels` and their
/// upper tail sums.
pub fn block_matrices(m: usize, pmfs: &ArrivalPmfs, stp: &SlotTypeProbs, levels: usize) -> BlockSet {
    assert!(stp.max_nodes() >= m, "slot-type probabilities must cover n = 0..=M");
    let a = (0..=levels as i64)
        .map(|j| fill_pair(m, |n, k| a_entries(m, n, k, stp, pmfs, Increment::point(pmfs, j))))
        .collect();
    let b = (-1..=levels as i64)
        .map(|j| fill_pair(m, |n, k| b_entries(m, n, k, stp, pmfs, Increment::point(pmfs, j))))
        .collect();
    let a_tail = (0..=levels as i64 + 1)
        .map(|j| fill_pair(m, |n, k| a_entries(m, n, k, stp, pmfs, Increment::tail(pmfs, j))))
        .collect();
    // Σ_{i>=J} (s(i+1) - s(i)) telescopes to -s(J): the tail increment
    // carries S(J+1) and S(J) in its `s_next`/`s` slots, which is exactly that.
    let b_tail = (0..=levels as i64 + 1)
        .map(|j| fill_pair(m, |n, k| b_entries(m, n, k, stp, pmfs, Increment::tail(pmfs, j))))
        .collect();
    BlockSet {
        m,
        levels,
        a,
        b,
        a_tail,
        b_tail,
    }
}

/// `q̃(n)` for `n = 1..=M`: probability that a non-empty queue holds exactly
/// one packet given `n` non-empty nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector(Vec<f64>);

impl QVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ChainError> {
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ChainError::InvalidQ { n: i + 1, value: v });
            }
        }
        Ok(Self(values))
    }

    pub fn uniform(m: usize, value: f64) -> Self {
        Self(vec![value; m])
    }

    /// `q̃(n)`, `1 <= n <= M`.
    pub fn get(&self, n: usize) -> f64 {
        self.0[n - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs_diff(&self, other: &QVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Row-stochastic transition matrix over states `(j, k)`, `j = 0..=K`,
/// `k = 0..M-1`, with row index `j * M + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTpm {
    m: usize,
    k: usize,
    p: DMatrix<f64>,
}

impl ReducedTpm {
    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn buffer(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn index(&self, level: usize, others: usize) -> usize {
        level * self.m + others
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn get(&self, from: (usize, usize), to: (usize, usize)) -> f64 {
        self.p[(self.index(from.0, from.1), self.index(to.0, to.1))]
    }

    pub fn max_row_deviation(&self) -> f64 {
        self.p.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Wraps an arbitrary row-stochastic matrix; used by tests and tools.
    pub fn from_matrix(m: usize, p: DMatrix<f64>) -> Self {
        let k = p.nrows() / m.max(1) - 1;
        Self { m, k, p }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("from_level,from_others");
        for j in 0..=self.k {
            for kk in 0..self.m {
                out.push_str(&format!(",p_{j}_{kk}"));
            }
        }
        out.push('\n');
        for j in 0..=self.k {
            for kk in 0..self.m {
                out.push_str(&format!("{j},{kk}"));
                for v in self.p.row(self.index(j, kk)).iter() {
                    out.push_str(&format!(",{v:e}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

fn write_block(
    p: &mut DMatrix<f64>,
    m: usize,
    level: usize,
    col_level: usize,
    pair: &BlockPair,
    q_row: impl Fn(usize) -> f64,
) {
    for n in 0..m {
        let q = q_row(n);
        for kk in 0..m {
            p[(level * m + n, col_level * m + kk)] = pair.fixed[(n, kk)] + q * pair.q_part[(n, kk)];
        }
    }
}

/// Assembles the finite-buffer matrix from the blocks at the given `q̃`.
pub fn assemble_tpm(blocks: &BlockSet, q: &QVector, k: usize) -> Result<ReducedTpm, ChainError> {
    let m = blocks.nodes();
    if k == 0 {
        return Err(ChainError::ZeroBuffer);
    }
    if q.len() != m {
        return Err(ChainError::QLength {
            expected: m,
            got: q.len(),
        });
    }
    if blocks.levels() < k {
        return Err(ChainError::InsufficientBlocks {
            have: blocks.levels(),
            need: k,
        });
    }
    QVector::new(q.as_slice().to_vec())?;

    let dim = (k + 1) * m;
    let mut p = DMatrix::zeros(dim, dim);
    // Δ_A = diag(0, q(1), .., q(M-1)), Δ_B = diag(q(1), .., q(M)).
    let q_a = |n: usize| if n == 0 { 0.0 } else { q.get(n) };
    let q_b = |n: usize| q.get(n + 1);

    for j in 0..k {
        write_block(&mut p, m, 0, j, blocks.a(j), q_a);
    }
    write_block(&mut p, m, 0, k, blocks.a_tail(k), q_a);
    for level in 1..=k {
        for col in (level - 1)..k {
            let j = col as i64 - level as i64;
            write_block(&mut p, m, level, col, blocks.b(j), q_b);
        }
        write_block(&mut p, m, level, k, blocks.b_tail(k - level), q_b);
    }

    for row in 0..dim {
        let mut clamped = false;
        for col in 0..dim {
            let v = p[(row, col)];
            if v < 0.0 {
                if v < -CLAMP_TOL {
                    return Err(ChainError::NegativeEntry { row, col, value: v });
                }
                p[(row, col)] = 0.0;
                clamped = true;
            }
        }
        let sum: f64 = p.row(row).sum();
        let deviation = (sum - 1.0).abs();
        if deviation > ROW_SUM_TOL {
            return Err(ChainError::RowSumViolation { row, sum, deviation });
        }
        if clamped {
            p.row_mut(row).scale_mut(1.0 / sum);
        }
    }
    Ok(ReducedTpm { m, k, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Buffer, Scenario};
    use crate::saturation::AttemptModel;

    fn setup(m: usize, lambda: f64, k: usize) -> (BlockSet, SlotTypeProbs, ArrivalPmfs) {
        let s = Scenario::homogeneous(m, lambda, Buffer::Finite(k));
        let slots = s.slot_durations();
        let profile = AttemptProfile::compute(m, &s.mac, AttemptModel::FiniteRetry).unwrap();
        let pmfs = arrival_pmfs(lambda, &slots, default_j_max(k, lambda * slots.l_succ()));
        let stp = slot_type_probs(&profile, m);
        (block_matrices(m, &pmfs, &stp, k), stp, pmfs)
    }

    #[test]
    fn zero_rate_pmfs_are_point_masses() {
        let slots = Scenario::homogeneous(1, 0.0, Buffer::Finite(1)).slot_durations();
        let pmfs = arrival_pmfs(0.0, &slots, 8);
        for pmf in [&pmfs.d, &pmfs.s, &pmfs.c] {
            assert_eq!(pmf.p(0), 1.0);
            assert!((1..=8).all(|j| pmf.p(j) == 0.0));
            assert_eq!(pmf.upper_tail(1), 0.0);
        }
    }

    #[test]
    fn poisson_point_values() {
        let slots = Scenario::homogeneous(1, 100.0, Buffer::Finite(1)).slot_durations();
        let pmfs = arrival_pmfs(100.0, &slots, 70);
        assert!((pmfs.d.p(0) - (-0.002_f64).exp()).abs() < 1e-16);
        assert!((pmfs.d.p(1) - (-0.002_f64).exp() * 0.002).abs() < 1e-17);
        assert_eq!(pmfs.d.p(-1), 0.0);
        let total: f64 = pmfs.s.as_slice().iter().sum::<f64>() + pmfs.s.beyond();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn slot_probabilities_small_cases() {
        let profile = AttemptProfile::from_betas(vec![0.3, 0.1]);
        let stp = slot_type_probs(&profile, 2);
        assert_eq!((stp.p_idle[0], stp.p_succ[0], stp.p_coll[0]), (1.0, 0.0, 0.0));
        assert!((stp.p_succ[1] - 0.3).abs() < 1e-16 && stp.p_coll[1].abs() < 1e-16);
        assert!((stp.p_idle[2] - 0.81).abs() < 1e-15);
        assert!((stp.p_succ[2] - 0.18).abs() < 1e-15);
        assert!((stp.p_coll[2] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn a_blocks_upper_triangular() {
        let (blocks, _, _) = setup(5, 40.0, 3);
        for j in 0..=3 {
            let a = blocks.a(j);
            for n in 0..5 {
                for k in 0..n {
                    assert_eq!(a.fixed[(n, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_rate_departure_entries() {
        let m = 4;
        let (blocks, stp, _) = setup(m, 0.0, 2);
        for n in 0..m {
            let down = blocks.b(-1);
            assert!((down.fixed[(n, n)] - stp.p_succ[n + 1] / (n + 1) as f64).abs() < 1e-15);
            if n >= 1 {
                // non-tagged departure that empties its queue: q(n+1) n/(n+1) p_succ
                let expect = n as f64 / (n + 1) as f64 * stp.p_succ[n + 1];
                assert!((blocks.b(0).q_part[(n, n - 1)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rows_sum_to_one() {
        for &(m, k) in &[(2, 2), (3, 5), (10, 5), (1, 3)] {
            for &lambda in &[1.0, 30.0, 120.0] {
                let (blocks, _, _) = setup(m, lambda, k);
                for q in [0.05, 0.5, 1.0] {
                    let tpm = assemble_tpm(&blocks, &QVector::uniform(m, q), k).unwrap();
                    assert!(tpm.max_row_deviation() < 1e-12, "m={m} k={k} λ={lambda}");
                }
            }
        }
    }

    #[test]
    fn unit_buffer_layout() {
        let m = 3;
        let (blocks, _, _) = setup(m, 50.0, 1);
        let q = QVector::uniform(m, 0.7);
        let tpm = assemble_tpm(&blocks, &q, 1).unwrap();
        assert_eq!(tpm.dim(), 2 * m);
        let q_b = |n: usize| q.get(n + 1);
        for n in 0..m {
            for kk in 0..m {
                let b = blocks.b(-1);
                let expect = b.fixed[(n, kk)] + q_b(n) * b.q_part[(n, kk)];
                assert!((tpm.get((1, n), (0, kk)) - expect).abs() < 1e-15);
                let t = blocks.b_tail(0);
                let expect = t.fixed[(n, kk)] + q_b(n) * t.q_part[(n, kk)];
                assert!((tpm.get((1, n), (1, kk)) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_node_zero_rate_departure() {
        let (blocks, stp, _) = setup(1, 0.0, 3);
        let tpm = assemble_tpm(&blocks, &QVector::uniform(1, 1.0), 3).unwrap();
        assert!((tpm.get((1, 0), (0, 0)) - stp.p_succ[1]).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_q() {
        let (blocks, _, _) = setup(2, 10.0, 2);
        let q = QVector(vec![0.5, 0.0]);
        assert!(matches!(
            assemble_tpm(&blocks, &q, 2),
            Err(ChainError::InvalidQ { n: 2, .. })
        ));
    }

    #[test]
    fn sign_property_at_q_bounds() {
        let (blocks, _, _) = setup(6, 80.0, 4);
        let check = |pair: &BlockPair| {
            for q in [0.0, 1.0] {
                for v in (&pair.fixed + &pair.q_part * q).iter() {
                    assert!(*v >= -1e-15);
                }
            }
        };
        for j in 0..=4 {
            check(blocks.a(j));
            check(blocks.a_tail(j));
            check(blocks.b_tail(j));
        }
        for j in -1..=4 {
            check(blocks.b(j));
        }
    }

    #[test]
    fn tails_match_complement_of_partial_sums() {
        let (blocks, _, _) = setup(3, 90.0, 4);
        for big_j in 0..=4 {
            let mut partial = blocks.a_tail(0).fixed.clone();
            for j in 0..big_j {
                partial -= &blocks.a(j).fixed;
            }
            assert!((partial - &blocks.a_tail(big_j).fixed).abs().max() < 1e-12);
        }
    }

    #[test]
    fn collision_complement_is_accurate() {
        let profile = AttemptProfile::compute(30, &Default::default(), AttemptModel::Bianchi).unwrap();
        let stp = slot_type_probs(&profile, 30);
        for n in 1..=30 {
            let b = profile.beta(n);
            let direct = 1.0 - (1.0 - b).powi(n as i32) - n as f64 * b * (1.0 - b).powi(n as i32 - 1);
            assert!((stp.p_coll[n] - direct).abs() < 1e-14);
        }
    }
}
