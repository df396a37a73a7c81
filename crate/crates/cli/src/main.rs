//! Experiment harness for quantized distributed optimization: single
//! runs, bit-budget sweeps, transmission-time sweeps, and packet-loss
//! retransmission studies, all driven by a TOML configuration.

mod build;
mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Configuration, input, or output problem (exit 2).
    Config(String),
    /// The quantization grid overflowed during a run (exit 3).
    Overflow(String),
    /// The requested bit width cannot converge (exit 4).
    Divergent(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn overflow(msg: impl Into<String>) -> Self {
        CliError::Overflow(msg.into())
    }

    pub fn divergent(msg: impl Into<String>) -> Self {
        CliError::Divergent(msg.into())
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Overflow(_) => 3,
            CliError::Divergent(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Overflow(m) | CliError::Divergent(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "quantgrid",
    version,
    about = "Simulates linearly convergent distributed algorithms under adaptive-grid quantization and digital channel models"
)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the Monte Carlo replica count.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and summary.txt.
    Run,
    /// Sweep bit widths: iteration, bit, and time budgets per width.
    SweepBits,
    /// Transmission-time sweep over bit widths for the channel model.
    Ttc,
    /// Retransmission study over a packet-loss grid.
    Retrans,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::config("--config PATH is required"))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(out) = cli.out {
        cfg.run.out = Some(out);
    }
    if let Some(replicas) = cli.replicas {
        cfg.run.replicas = Some(replicas);
    }
    match cli.command {
        Command::Run => commands::run(&cfg),
        Command::SweepBits => commands::sweep_bits(&cfg),
        Command::Ttc => commands::ttc(&cfg),
        Command::Retrans => commands::retrans(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = execute(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
