//! `qgate`: pulse optimization, agent training, evaluation and sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid arguments or
//! configuration, 3 missing input artifact.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qgate_core::harness::Algorithm;
use qgate_core::Error;

use crate::commands::Run;
use crate::config::Settings;

#[derive(Parser)]
#[command(name = "qgate", version, about = "Robust quantum gate control workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a pulse schedule with exact-gradient GRAPE.
    Grape(Common),
    /// Optimize a pulse schedule with finite-difference gradient ascent.
    Ga(Common),
    /// Train a PPO agent on a fixed disturbance task.
    TrainPpo(Common),
    /// Train a meta-learning agent over a task distribution.
    TrainMeta(Common),
    /// Mean maximum fidelity over an eta grid.
    Sweep(Common),
    /// Mean maximum fidelity over the (eta0, etau) plane.
    Heatmap(Common),
    /// Monte Carlo evaluation on one task.
    Eval(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for every random stream of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Config override, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config(_) => 2,
        Error::MissingArtifact(_) => 3,
        _ => 1,
    }
}

fn execute(name: &'static str, common: Common, f: fn(&Run) -> qgate_core::Result<()>) -> Result<(), Error> {
    let settings = Settings::load(common.config.as_deref(), &common.overrides)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    std::fs::create_dir_all(&common.out)?;
    let run = Run { command: name, settings, seed: common.seed, out: common.out };
    run.echo_config()?;
    pool.install(|| f(&run))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Grape(c) => execute("grape", c, |r| commands::optimize(r, Algorithm::Grape)),
        Command::Ga(c) => execute("ga", c, |r| commands::optimize(r, Algorithm::Ga)),
        Command::TrainPpo(c) => execute("train-ppo", c, commands::train_ppo),
        Command::TrainMeta(c) => execute("train-meta", c, commands::train_meta),
        Command::Sweep(c) => execute("sweep", c, commands::sweep),
        Command::Heatmap(c) => execute("heatmap", c, commands::heatmap),
        Command::Eval(c) => execute("eval", c, commands::eval),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qgate: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
