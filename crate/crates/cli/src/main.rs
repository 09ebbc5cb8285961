//! Command-line front end: parse a network configuration, dispatch to the
//! simulators, solvers and diagnostics, and map errors onto exit codes
//! (0 success, 2 validation, 3 numeric, 4 guard abort).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use srn_core::harness::{self, RunOptions};
use srn_core::network::{parse_config, Config};
use srn_core::SimError;

#[derive(Parser)]
#[command(
    name = "srn",
    about = "Spatial reaction network simulator: exact particle dynamics, density limits, \
             hybrid jump/flow dynamics, and convergence diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Network configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every trajectory derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory for logs, snapshots and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for ensembles (default: all cores). Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Snapshot cadence in simulated time units (overrides the config).
    #[arg(long, global = true)]
    snapshot_every: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// One exact particle trajectory with event log and snapshots.
    Simulate,
    /// Solve the deterministic density system.
    Pide,
    /// One hybrid jump/flow trajectory (or stationary count sampling).
    Pdmp,
    /// Particle-to-density convergence experiment over abundance scales.
    Converge,
    /// Monte Carlo drift versus the assembled generator at a frozen state.
    CheckGenerator,
    /// Martingale fluctuations versus predicted quadratic variation.
    CheckQv,
    /// March the density system to its stationary state.
    SteadyState,
}

fn load_config(cli: &Cli) -> Result<Config, SimError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| SimError::config("--config PATH is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| {
        SimError::config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config(&text)
}

fn run(cli: &Cli) -> Result<(), SimError> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| SimError::config(format!("worker pool: {e}")))?;
    }
    let cfg = load_config(cli)?;
    let opts = RunOptions {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        snapshot_every: cli.snapshot_every,
    };
    match cli.command {
        Command::Simulate => harness::cmd_simulate(&cfg, &opts),
        Command::Pide => harness::cmd_pide(&cfg, &opts),
        Command::Pdmp => harness::cmd_pdmp(&cfg, &opts),
        Command::Converge => harness::cmd_converge(&cfg, &opts),
        Command::CheckGenerator => harness::cmd_check_generator(&cfg, &opts),
        Command::CheckQv => harness::cmd_check_qv(&cfg, &opts),
        Command::SteadyState => harness::cmd_steady_state(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.code());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
