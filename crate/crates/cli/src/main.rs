//! `feast`: gradient checks, coarsening dumps, training, evaluation and
//! ablation sweeps for feature-steered graph convolution networks.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "feast", version, about, propagate_version = true)]
pub struct Cli {
    /// TOML configuration file; keys override the task preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (checkpoint, hierarchy dump or metric table).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Finite-difference checks of every backward pass.
    Gradcheck(commands::GradcheckArgs),
    /// Build a coarsening hierarchy and write its JSON dump.
    Coarsen(commands::CoarsenArgs),
    /// Train a model and write a checkpoint plus a metrics log.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint.
    Eval(commands::EvalArgs),
    /// Ablation over M or test noise.
    Sweep(commands::SweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Correspondence,
    Partlabel,
    Toy,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FEAST_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("FEAST_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "FEAST_THREADS must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> anyhow::Result<bool> {
        init_threads()?;
        match &cli.command {
            Command::Gradcheck(a) => commands::gradcheck(&cli, a),
            Command::Coarsen(a) => commands::coarsen(&cli, a),
            Command::Train(a) => commands::train(&cli, a),
            Command::Eval(a) => commands::eval(&cli, a),
            Command::Sweep(a) => commands::sweep(&cli, a),
        }
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
