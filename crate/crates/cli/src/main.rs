use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdar_cli::commands::{self, SimSettings, DEFAULT_HORIZON_S};
use sdar_cli::config::CommandName;
use sdar_cli::{write_artifacts, Artifact, CliError, EngineChoice, Format, RunConfig};

#[derive(Parser)]
#[command(
    name = "sdar",
    version,
    about = "Saturation, Markov-chain analysis and simulation of slotted random access"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Write outputs into this directory instead of stdout.
    #[arg(short, long, global = true, env = "SDAR_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Output format (defaults to the config's, then csv).
    #[arg(short, long, global = true, value_enum)]
    format: Option<Format>,
    /// Falls back to the config's `command`.
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-population saturation throughput and the stability verdict.
    Saturation,
    /// Solve the reduced chain at the configured rate.
    Analyze {
        /// Also emit the q-iteration history.
        #[arg(long)]
        iterations: bool,
    },
    /// Run the event simulator(s).
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Analysis (and optionally simulation) over a grid of rates.
    Sweep {
        /// Add simulated columns next to the analytical ones.
        #[arg(long)]
        with_sim: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compare the reduced chain against the exact joint chain.
    Validate,
    /// Write the converged reduced transition matrix.
    DumpChain,
}

impl Command {
    fn from_config(name: CommandName) -> Self {
        match name {
            CommandName::Saturation => Command::Saturation,
            CommandName::Analyze => Command::Analyze { iterations: false },
            CommandName::Simulate => Command::Simulate {
                sim: SimArgs::default(),
            },
            CommandName::Sweep => Command::Sweep {
                with_sim: false,
                sim: SimArgs::default(),
            },
            CommandName::Validate => Command::Validate,
            CommandName::DumpChain => Command::DumpChain,
        }
    }
}

#[derive(clap::Args, Default)]
struct SimArgs {
    #[arg(long, value_enum)]
    engine: Option<EngineChoice>,
    #[arg(long, env = "SDAR_SEED")]
    seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Event trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl SimArgs {
    fn settings(self, cfg: &RunConfig) -> Result<SimSettings, CliError> {
        let block = cfg.simulate.clone().unwrap_or_default();
        let seed = self
            .seed
            .or(block.seed)
            .ok_or_else(|| CliError::Config("a seed is required (--seed, SDAR_SEED or simulate.seed)".into()))?;
        Ok(SimSettings {
            engine: self.engine.unwrap_or(block.engine),
            seed,
            horizon_s: self.horizon.or(block.horizon).unwrap_or(DEFAULT_HORIZON_S),
            warmup_fraction: block.warmup_fraction,
            trace: self.trace.or(block.trace),
        })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    let output = cfg.output.clone().unwrap_or_default();
    let format = cli.format.or(output.format).unwrap_or_default();
    let out_dir = cli.output_dir.or(output.dir);

    let command = match (cli.command, cfg.command) {
        (Some(c), _) => c,
        (None, Some(name)) => Command::from_config(name),
        (None, None) => {
            return Err(CliError::Config(
                "no subcommand given and the config has no `command`".into(),
            ))
        }
    };
    let artifacts: Vec<Artifact> = match command {
        Command::Saturation => commands::saturation(&cfg, format)?,
        Command::Analyze { iterations } => commands::analyze_cmd(&cfg, format, iterations)?,
        Command::DumpChain => commands::dump_chain(&cfg, format)?,
        Command::Validate => commands::validate(&cfg)?,
        Command::Sweep { with_sim, sim } => {
            let settings = if with_sim { Some(sim.settings(&cfg)?) } else { None };
            commands::sweep(&cfg, settings.as_ref(), format)?
        }
        Command::Simulate { sim } => {
            let settings = sim.settings(&cfg)?;
            let out = commands::simulate(&cfg, &settings, format)?;
            if let Some(t) = out.timing {
                eprintln!(
                    "wall-clock: sdar {:.3} s, dcf {:.3} s, dcf/sdar {:.2}",
                    t.sdar_s, t.dcf_s, t.speedup
                );
            }
            out.artifacts
        }
    };

    match out_dir {
        Some(dir) => {
            for p in write_artifacts(&dir, &artifacts)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            // timing is nondeterministic and already reported on stderr
            for a in artifacts.iter().filter(|a| a.file_name != "timing.json") {
                stdout
                    .write_all(a.content.as_bytes())
                    .map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sdar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
