//! `lsdr`: generate long-tailed label-shift data, train label-shift
//! semi-supervised models, estimate the unlabeled class distribution and run
//! the Monte Carlo studies.
//!
//! Exit status: 0 when every requested piece of work completed (or when
//! `--allow-partial` accepted some failed replications), 1 on errors, 2 on
//! usage errors, 3 when replications failed without `--allow-partial`.

mod args;
mod commands;
mod io;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lsdr", version, about = "Label-shift SSL with doubly robust class-prior estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a long-tailed labeled/unlabeled dataset (JSON lines).
    Synth(commands::synth::SynthArgs),
    /// Train a classifier and missingness mechanism; writes a checkpoint.
    Train(commands::train::TrainCmd),
    /// Estimate P(Y) and P(Y|A=0) with OR, IPW or DR.
    Estimate(commands::estimate::EstimateArgs),
    /// Monte Carlo studies: coverage, bias decay, shape sweep.
    #[command(subcommand)]
    Montecarlo(commands::montecarlo::McCommand),
    /// Accuracy of a checkpoint on a class-balanced test set.
    Eval(commands::eval::EvalArgs),
    /// Tables from a sweep or coverage output.
    Report(commands::report::ReportArgs),
}

/// Work finished; `Partial` means some replications failed.
pub enum Outcome {
    Complete,
    Partial(usize),
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("LSDR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("LSDR_THREADS='{v}' is not a thread count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => commands::synth::run(&a),
        Command::Train(a) => commands::train::run(&a),
        Command::Estimate(a) => commands::estimate::run(&a),
        Command::Montecarlo(c) => commands::montecarlo::run(&c),
        Command::Eval(a) => commands::eval::run(&a),
        Command::Report(a) => commands::report::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            eprintln!("error: {n} replication(s) failed; rerun with --allow-partial to accept");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
