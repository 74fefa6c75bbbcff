//! One-call analysis of a homogeneous finite-buffer scenario.

use thiserror::Error;

use crate::params::{validate_scenario, ParamError, Scenario};
use crate::perf::{perf_report, PerfError, PerfReport};
use crate::saturation::{AttemptModel, AttemptProfile, SaturationError};
use crate::solver::{solve_sdar_model, ModelInputs, SdarSolution, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Saturation(#[from] SaturationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub profile: AttemptProfile,
    pub inputs: ModelInputs,
    pub solution: SdarSolution,
    pub report: PerfReport,
}

pub fn analyze(s: &Scenario, model: AttemptModel) -> Result<Analysis, AnalysisError> {
    let checked = validate_scenario(s.clone())?;
    let (lambda, k) = checked.require_analytical()?;
    let profile = AttemptProfile::compute(s.m, &s.mac, model)?;
    let slots = s.slot_durations();
    let (inputs, solution) = solve_sdar_model(s.m, k, lambda, &profile, &slots)?;
    let report = perf_report(&solution.pi, &profile, &inputs.stp, &inputs.pmfs, &slots, lambda)?;
    Ok(Analysis {
        profile,
        inputs,
        solution,
        report,
    })
}
