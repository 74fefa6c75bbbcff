use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sdar_core::analysis::analyze;
use sdar_core::chain::assemble_tpm;
use sdar_core::oracle::{compare_reduced_vs_oracle, Discrepancy};
use sdar_core::params::{validate_scenario, Buffer, Scenario};
use sdar_core::perf::PerfReport;
use sdar_core::saturation::{saturation_curve, stability_check, AttemptProfile, StabilityVerdict};
use sdar_sim::{empirical_report, run_dcf_traced, run_sdar_traced, EmpiricalReport, SimOptions};
use serde::Serialize;

use crate::config::{EngineChoice, Format, RunConfig};
use crate::{to_json, Artifact, CliError};

pub const DEFAULT_HORIZON_S: f64 = 100.0;

/// Simulation settings after merging config, flags and environment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub engine: EngineChoice,
    pub seed: u64,
    pub horizon_s: f64,
    pub warmup_fraction: Option<f64>,
    pub trace: Option<PathBuf>,
}

impl SimSettings {
    pub fn options(&self, cfg: &RunConfig) -> SimOptions {
        let mut o = SimOptions::new(self.seed, self.horizon_s);
        o.attempt_model = cfg.attempt_model;
        if let Some(w) = self.warmup_fraction {
            o.warmup_fraction = w;
        }
        o
    }
}

#[derive(Serialize)]
struct SaturationRow {
    n: usize,
    beta: f64,
    gamma: f64,
    theta_sat: f64,
    theta_sat_node: f64,
    l_sat: f64,
}

#[derive(Serialize)]
struct SaturationOutput {
    rows: Vec<SaturationRow>,
    stability: Option<StabilityVerdict>,
}

pub fn saturation(cfg: &RunConfig, format: Format) -> Result<Vec<Artifact>, CliError> {
    let s = cfg.scenario()?;
    let s = validate_scenario(s)?.scenario;
    let profile =
        AttemptProfile::compute(s.m, &s.mac, cfg.attempt_model).map_err(|e| CliError::Numeric(e.to_string()))?;
    let curve = saturation_curve(&profile, &s.slot_durations(), s.m);
    let rows: Vec<SaturationRow> = (1..=s.m)
        .map(|n| SaturationRow {
            n,
            beta: profile.beta(n),
            gamma: profile.gamma(n),
            theta_sat: curve.theta(n),
            theta_sat_node: curve.theta(n) / n as f64,
            l_sat: curve.l_sat[n - 1],
        })
        .collect();
    let stability = s.lambdas.iter().any(|&l| l > 0.0).then(|| stability_check(&s, &curve));
    Ok(vec![match format {
        Format::Csv => {
            let mut out = String::from("n,beta,gamma,theta_sat,theta_sat_node,l_sat\n");
            for r in &rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.n, r.beta, r.gamma, r.theta_sat, r.theta_sat_node, r.l_sat
                ));
            }
            Artifact::new("saturation.csv", out)
        }
        Format::Json => Artifact::new("saturation.json", to_json(&SaturationOutput { rows, stability })?),
    }])
}

pub fn analyze_cmd(cfg: &RunConfig, format: Format, iterations: bool) -> Result<Vec<Artifact>, CliError> {
    let s = cfg.scenario()?;
    let a = analyze(&s, cfg.attempt_model)?;
    let mut out = vec![match format {
        Format::Csv => Artifact::new(
            "analysis.csv",
            format!("{}\n{}\n", PerfReport::CSV_HEADER, a.report.csv_row()),
        ),
        Format::Json => Artifact::new("analysis.json", to_json(&a.report)?),
    }];
    if iterations {
        out.push(Artifact::new("iterations.csv", a.solution.report.to_csv()));
    }
    Ok(out)
}

pub fn dump_chain(cfg: &RunConfig, format: Format) -> Result<Vec<Artifact>, CliError> {
    let s = cfg.scenario()?;
    let a = analyze(&s, cfg.attempt_model)?;
    let k = a.inputs.k;
    let tpm = assemble_tpm(&a.inputs.blocks, &a.solution.q, k).map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok(vec![match format {
        Format::Csv => Artifact::new("chain.csv", tpm.to_csv()),
        Format::Json => {
            #[derive(Serialize)]
            struct Dump {
                m: usize,
                k: usize,
                lambda: f64,
                q: Vec<f64>,
                /// Row `j·M + n` is tagged level `j`, `n` other non-empty nodes.
                rows: Vec<Vec<f64>>,
            }
            let p = tpm.matrix();
            let rows = (0..p.nrows()).map(|i| p.row(i).iter().copied().collect()).collect();
            Artifact::new(
                "chain.json",
                to_json(&Dump {
                    m: s.m,
                    k,
                    lambda: a.report.lambda,
                    q: a.solution.q.as_slice().to_vec(),
                    rows,
                })?,
            )
        }
    }])
}

pub fn validate(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let k = match cfg.buffer {
        Buffer::Finite(k) => k,
        Buffer::Infinite => return Err(CliError::Config("validate needs a finite buffer".into())),
    };
    let rates = match (&cfg.sweep, cfg.lambda, &cfg.lambdas) {
        (Some(sw), _, _) => sw.points()?,
        (None, Some(l), _) => vec![l],
        (None, None, Some(ls)) if ls.windows(2).all(|w| w[0] == w[1]) && !ls.is_empty() => vec![ls[0]],
        _ => return Err(CliError::Config("validate needs one common rate or a sweep".into())),
    };
    let base = validate_scenario(cfg.scenario_with(vec![rates[0]; cfg.m]))?.scenario;
    let profile =
        AttemptProfile::compute(base.m, &base.mac, cfg.attempt_model).map_err(|e| CliError::Numeric(e.to_string()))?;
    let slots = base.slot_durations();
    let reports: Vec<Discrepancy> = rates
        .par_iter()
        .map(|&l| compare_reduced_vs_oracle(base.m, k, l, &profile, &slots).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    Ok(vec![Artifact::new("validate.json", to_json(&reports)?)])
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineRun {
    pub report: EmpiricalReport,
    pub offered: Vec<f64>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

fn run_engine(
    s: &Scenario,
    opts: &SimOptions,
    engine: EngineChoice,
    trace: Option<&Path>,
) -> Result<EngineRun, CliError> {
    let mut writer = match trace {
        Some(p) => Some(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => None,
    };
    let sink = writer.as_mut().map(|w| w as &mut dyn Write);
    let started = Instant::now();
    let stats = match engine {
        EngineChoice::Dcf => run_dcf_traced(s, opts, sink)?,
        _ => run_sdar_traced(s, opts, sink)?,
    };
    let wall_clock_s = started.elapsed().as_secs_f64();
    if let Some(mut w) = writer {
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(EngineRun {
        report: empirical_report(&stats)?,
        offered: s.lambdas.clone(),
        wall_clock_s,
    })
}

fn trace_path(base: &Path, engine: &str, both: bool) -> PathBuf {
    if !both {
        return base.to_path_buf();
    }
    let mut name = base.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{engine}"));
    base.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub sdar_s: f64,
    pub dcf_s: f64,
    /// DCF wall-clock over SDAR wall-clock.
    pub speedup: f64,
}

pub struct SimulateOutput {
    pub artifacts: Vec<Artifact>,
    pub timing: Option<Timing>,
}

pub fn simulate(cfg: &RunConfig, sim: &SimSettings, format: Format) -> Result<SimulateOutput, CliError> {
    let s = validate_scenario(cfg.scenario()?)?.scenario;
    if s.lambdas.iter().all(|&l| l == 0.0) {
        return Err(CliError::Config("simulate needs a positive arrival rate".into()));
    }
    let opts = sim.options(cfg);
    let engines: &[(EngineChoice, &str)] = match sim.engine {
        EngineChoice::Sdar => &[(EngineChoice::Sdar, "sdar")],
        EngineChoice::Dcf => &[(EngineChoice::Dcf, "dcf")],
        EngineChoice::Both => &[(EngineChoice::Sdar, "sdar"), (EngineChoice::Dcf, "dcf")],
    };
    let both = engines.len() > 1;
    let mut runs = Vec::new();
    for &(engine, name) in engines {
        let trace = sim.trace.as_deref().map(|p| trace_path(p, name, both));
        runs.push(run_engine(&s, &opts, engine, trace.as_deref())?);
    }
    let timing = both.then(|| Timing {
        sdar_s: runs[0].wall_clock_s,
        dcf_s: runs[1].wall_clock_s,
        speedup: runs[1].wall_clock_s / runs[0].wall_clock_s,
    });
    let mut artifacts = vec![match format {
        Format::Json => Artifact::new("simulate.json", to_json(&runs)?),
        Format::Csv => {
            let mut out = String::from("engine,m,seed,horizon,gamma,theta_node,w_bar,block_prob,empty_fraction\n");
            for r in &runs {
                let e = &r.report;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    e.engine,
                    e.m,
                    e.seed,
                    sim.horizon_s,
                    e.gamma,
                    e.theta_node,
                    e.w_bar,
                    e.block_prob,
                    e.empty_fraction
                ));
            }
            Artifact::new("simulate.csv", out)
        }
    }];
    if let Some(t) = timing {
        // wall-clock numbers vary run to run, so they live in their own file
        artifacts.push(Artifact::new("timing.json", to_json(&t)?));
    }
    Ok(SimulateOutput { artifacts, timing })
}

pub const SWEEP_SIM_HEADER: &str = "sim_gamma,sim_theta_node,sim_w_bar,sim_block_prob";

pub fn sweep(cfg: &RunConfig, sim: Option<&SimSettings>, format: Format) -> Result<Vec<Artifact>, CliError> {
    let points = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a `sweep` block".into()))?
        .points()?;
    let analytical = matches!(cfg.buffer, Buffer::Finite(_));
    if !analytical && sim.is_none() {
        return Err(CliError::Config(
            "infinite buffers have no analytical sweep; add --with-sim".into(),
        ));
    }
    // validate once up front so a bad config fails as a config error
    validate_scenario(cfg.scenario_with(vec![points[0]; cfg.m]))?;

    #[derive(Serialize)]
    struct Point {
        lambda: f64,
        analysis: Option<PerfReport>,
        simulation: Option<EmpiricalReport>,
    }
    let results: Vec<Point> = points
        .par_iter()
        .map(|&l| {
            let s = cfg.scenario_with(vec![l; cfg.m]);
            let analysis = if analytical {
                Some(analyze(&s, cfg.attempt_model)?.report)
            } else {
                None
            };
            let simulation = match sim {
                Some(set) => {
                    let engine = if set.engine == EngineChoice::Dcf {
                        EngineChoice::Dcf
                    } else {
                        EngineChoice::Sdar
                    };
                    Some(run_engine(&s, &set.options(cfg), engine, None)?.report)
                }
                None => None,
            };
            Ok(Point {
                lambda: l,
                analysis,
                simulation,
            })
        })
        .collect::<Result<_, CliError>>()?;

    Ok(vec![match format {
        Format::Json => Artifact::new("sweep.json", to_json(&results)?),
        Format::Csv => {
            let mut out = String::from(PerfReport::CSV_HEADER);
            if sim.is_some() {
                out.push(',');
                out.push_str(SWEEP_SIM_HEADER);
            }
            out.push('\n');
            for p in &results {
                match &p.analysis {
                    Some(a) => out.push_str(&a.csv_row()),
                    None => out.push_str(&format!("{},inf,{},,,,,", cfg.m, p.lambda)),
                }
                if let Some(e) = &p.simulation {
                    out.push_str(&format!(",{},{},{},{}", e.gamma, e.theta_node, e.w_bar, e.block_prob));
                }
                out.push('\n');
            }
            Artifact::new("sweep.csv", out)
        }
    }])
}
