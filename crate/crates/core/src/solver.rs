//! Stationary distribution of the reduced chain and the fixed-point
//! iteration over `q̃`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::chain::{
    arrival_pmfs, assemble_tpm, block_matrices, default_j_max, slot_type_probs, ArrivalPmfs, BlockSet, ChainError,
    QVector, ReducedTpm, SlotTypeProbs,
};
use crate::params::SlotDurations;
use crate::saturation::AttemptProfile;

pub const Q_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 500;
pub const INITIAL_Q: f64 = 0.5;
/// Acceptable `‖πP − π‖_∞` before the power-iteration polish kicks in.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("linear system is singular; the chain is reducible")]
    SingularSystem,
    #[error("stationary residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("q iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("arrival rate must be positive")]
    NonPositiveRate,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// `π̃(j, k)` for `j = 0..=K`, `k = 0..M-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDist {
    m: usize,
    k: usize,
    pi: Vec<f64>,
}

impl StationaryDist {
    pub fn new(m: usize, k: usize, pi: Vec<f64>) -> Self {
        assert_eq!(pi.len(), (k + 1) * m);
        Self { m, k, pi }
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn buffer(&self) -> usize {
        self.k
    }

    pub fn get(&self, level: usize, others: usize) -> f64 {
        self.pi[level * self.m + others]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    /// Marginal of the tagged queue length, `j = 0..=K`.
    pub fn level_marginal(&self) -> Vec<f64> {
        self.pi.chunks(self.m).map(|c| c.iter().sum()).collect()
    }
}

/// `‖πP − π‖_∞`.
pub fn stationary_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let v = DVector::from_column_slice(pi);
    let moved = p.tr_mul(&v);
    (moved - v).amax()
}

/// Solves `π = πP`, `Σπ = 1` by a direct LU solve of `(Pᵀ − I)` with the last
/// equation replaced by the normalisation; a few power steps polish the
/// result if the direct residual is too large.
pub fn stationary_vector(p: &DMatrix<f64>) -> Result<Vec<f64>, SolverError> {
    let dim = p.nrows();
    let mut system = p.transpose();
    for i in 0..dim {
        system[(i, i)] -= 1.0;
    }
    for c in 0..dim {
        system[(dim - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(dim);
    rhs[dim - 1] = 1.0;

    let lu = system.lu();
    // Detect singularity relative to the matrix scale rather than exact zero.
    let u = lu.u();
    let pivot_floor = 1e-13 * u.amax().max(1.0);
    if (0..dim).any(|i| u[(i, i)].abs() <= pivot_floor) {
        return Err(SolverError::SingularSystem);
    }
    let sol = lu.solve(&rhs).ok_or(SolverError::SingularSystem)?;
    let mut pi: Vec<f64> = sol
        .iter()
        .map(|&x| if x < 0.0 && x > -1e-14 { 0.0 } else { x })
        .collect();
    if pi.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(SolverError::SingularSystem);
    }
    normalize(&mut pi);

    let mut residual = stationary_residual(p, &pi);
    let mut polish = 0;
    while residual > RESIDUAL_TOL && polish < 10_000 {
        let next = p.tr_mul(&DVector::from_column_slice(&pi));
        pi = next.iter().copied().collect();
        normalize(&mut pi);
        residual = stationary_residual(p, &pi);
        polish += 1;
    }
    if residual > RESIDUAL_TOL {
        return Err(SolverError::Residual(residual));
    }
    Ok(pi)
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// Grassmann–Taksar–Heyman elimination. Subtraction-free, so every entry of
/// `π` keeps full relative accuracy even when it is far below machine
/// epsilon relative to the largest one.
pub fn stationary_vector_gth(p: &DMatrix<f64>) -> Result<Vec<f64>, SolverError> {
    let dim = p.nrows();
    let mut a = p.clone();
    for n in (1..dim).rev() {
        let s: f64 = (0..n).map(|j| a[(n, j)]).sum();
        if s <= 0.0 || !s.is_finite() {
            return Err(SolverError::SingularSystem);
        }
        for i in 0..n {
            a[(i, n)] /= s;
        }
        for j in 0..n {
            let anj = a[(n, j)];
            if anj == 0.0 {
                continue;
            }
            for i in 0..n {
                a[(i, j)] += a[(i, n)] * anj;
            }
        }
    }
    let mut pi = vec![0.0; dim];
    pi[0] = 1.0;
    for j in 1..dim {
        pi[j] = (0..j).map(|i| pi[i] * a[(i, j)]).sum();
    }
    normalize(&mut pi);
    let residual = stationary_residual(p, &pi);
    if residual > RESIDUAL_TOL {
        return Err(SolverError::Residual(residual));
    }
    Ok(pi)
}

pub fn stationary_distribution(p: &ReducedTpm) -> Result<StationaryDist, SolverError> {
    let pi = stationary_vector_gth(p.matrix())?;
    Ok(StationaryDist::new(p.nodes(), p.buffer(), pi))
}

/// `q̃(n) = π̃(1, n-1) / Σ_{j=1..K} π̃(j, n-1)`; entries with a zero
/// denominator keep their `previous` value.
pub fn update_q(pi: &StationaryDist, previous: &QVector) -> QVector {
    let m = pi.nodes();
    let values = (1..=m)
        .map(|n| {
            let den: f64 = (1..=pi.buffer()).map(|j| pi.get(j, n - 1)).sum();
            if den > 0.0 {
                pi.get(1, n - 1) / den
            } else {
                previous.get(n)
            }
        })
        .collect();
    // Positivity is preserved: π̃ > 0 for an irreducible chain.
    QVector::new(values).unwrap_or_else(|_| previous.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub iterations: usize,
    pub q_history: Vec<Vec<f64>>,
    /// `max_n |Δq̃(n)|` per iteration.
    pub residuals: Vec<f64>,
    /// `‖πP − π‖_∞` per iteration.
    pub stationary_residuals: Vec<f64>,
    pub converged: bool,
}

impl IterationReport {
    pub fn to_csv(&self) -> String {
        let m = self.q_history.first().map_or(0, Vec::len);
        let mut out = String::from("iteration,max_dq,stationary_residual");
        for n in 1..=m {
            out.push_str(&format!(",q{n}"));
        }
        out.push('\n');
        for (i, q) in self.q_history.iter().enumerate() {
            out.push_str(&format!(
                "{},{:e},{:e}",
                i + 1,
                self.residuals[i],
                self.stationary_residuals[i]
            ));
            for v in q {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Everything built for one `(λ, K)` point that later stages reuse.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    pub slots: SlotDurations,
    pub pmfs: ArrivalPmfs,
    pub stp: SlotTypeProbs,
    pub blocks: BlockSet,
}

impl ModelInputs {
    pub fn build(m: usize, k: usize, lambda: f64, profile: &AttemptProfile, slots: &SlotDurations) -> Self {
        let j_max = default_j_max(k, lambda * slots.l_succ().max(slots.l_coll()));
        let pmfs = arrival_pmfs(lambda, slots, j_max);
        let stp = slot_type_probs(profile, m);
        let blocks = block_matrices(m, &pmfs, &stp, k);
        Self {
            m,
            k,
            lambda,
            slots: *slots,
            pmfs,
            stp,
            blocks,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdarSolution {
    pub pi: StationaryDist,
    pub q: QVector,
    pub report: IterationReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_q: f64,
    /// Under-relaxation weight on the new `q̃` (1 = plain iteration).
    pub relaxation: f64,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self {
            tolerance: Q_TOLERANCE,
            max_iterations: MAX_ITERATIONS,
            initial_q: INITIAL_Q,
            relaxation: 1.0,
        }
    }
}

/// Alternates matrix assembly, stationary solve and `q̃` update until `q̃`
/// stops moving. A non-converged run still returns the last iterate, with
/// `report.converged == false`.
pub fn iterate_q(inputs: &ModelInputs, settings: IterationSettings) -> Result<SdarSolution, SolverError> {
    if inputs.lambda <= 0.0 {
        return Err(SolverError::NonPositiveRate);
    }
    let mut q = QVector::uniform(inputs.m, settings.initial_q);
    let mut report = IterationReport {
        iterations: 0,
        q_history: Vec::new(),
        residuals: Vec::new(),
        stationary_residuals: Vec::new(),
        converged: false,
    };
    let mut pi;
    loop {
        let tpm = assemble_tpm(&inputs.blocks, &q, inputs.k)?;
        pi = stationary_distribution(&tpm)?;
        let fresh = update_q(&pi, &q);
        let next = if settings.relaxation == 1.0 {
            fresh
        } else {
            let w = settings.relaxation;
            let blended = q
                .as_slice()
                .iter()
                .zip(fresh.as_slice())
                .map(|(old, new)| (1.0 - w) * old + w * new)
                .collect();
            QVector::new(blended)?
        };
        let change = next.max_abs_diff(&q);
        report.iterations += 1;
        report.q_history.push(next.as_slice().to_vec());
        report.residuals.push(change);
        report
            .stationary_residuals
            .push(stationary_residual(tpm.matrix(), pi.as_slice()));
        q = next;
        if change < settings.tolerance {
            report.converged = true;
            break;
        }
        if report.iterations >= settings.max_iterations {
            break;
        }
    }
    Ok(SdarSolution { pi, q, report })
}

/// Solves the reduced model for a homogeneous, finite-buffer scenario.
pub fn solve_sdar_model(
    m: usize,
    k: usize,
    lambda: f64,
    profile: &AttemptProfile,
    slots: &SlotDurations,
) -> Result<(ModelInputs, SdarSolution), SolverError> {
    let inputs = ModelInputs::build(m, k, lambda, profile, slots);
    let solution = iterate_q(&inputs, IterationSettings::default())?;
    if !solution.report.converged {
        return Err(SolverError::NoConvergence {
            iterations: solution.report.iterations,
            last_change: solution.report.residuals.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok((inputs, solution))
}
