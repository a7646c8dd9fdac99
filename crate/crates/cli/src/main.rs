//! Pipeline driver: synthetic corpus generation, mining, dataset builds,
//! pre-training, fine-tuning, prediction, baselines and report generation.
//!
//! Every command is idempotent given identical inputs and seeds, writes its
//! data to files only, keeps progress on standard error, and drops a
//! resolved-config snapshot next to its primary output.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trialmine::Error;

#[derive(Parser)]
#[command(
    name = "trialmine",
    version,
    about = "Mine comparative evidence from abstracts and predict trial results"
)]
struct Cli {
    /// Worker threads (default: all cores for mining and evaluation, 1 for
    /// training commands).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus with gold records.
    Synth(commands::SynthArgs),
    /// Mine comparative sentences from a corpus into evidence records.
    Mine(commands::MineArgs),
    /// Direction distribution of mined records.
    Stats(commands::StatsArgs),
    /// Assemble a pre-training or fine-tuning dataset.
    Build(commands::BuildArgs),
    /// Pre-train the comparative language model.
    Pretrain(commands::PretrainArgs),
    /// Fine-tune a checkpoint (or a fresh model) for result prediction.
    Finetune(commands::FinetuneArgs),
    /// Predict results for a fine-tuning dataset.
    Predict(commands::PredictArgs),
    /// Run a non-neural baseline.
    Baseline(commands::BaselineArgs),
    /// Consolidate prediction CSVs into a report.
    Eval(commands::EvalArgs),
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Stream(_) => 2,
        Error::Invalid { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let training = matches!(cli.command, Command::Pretrain(_) | Command::Finetune(_));
    configure_workers(cli.workers, training);

    let result = match cli.command {
        Command::Synth(args) => commands::run_synth(args),
        Command::Mine(args) => commands::run_mine(args),
        Command::Stats(args) => commands::run_stats(args),
        Command::Build(args) => commands::run_build(args),
        Command::Pretrain(args) => commands::run_pretrain(args),
        Command::Finetune(args) => commands::run_finetune(args),
        Command::Predict(args) => commands::run_predict(args),
        Command::Baseline(args) => commands::run_baseline(args),
        Command::Eval(args) => commands::run_eval(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_workers(workers: Option<usize>, training: bool) {
    let threads = workers.unwrap_or(if training { 1 } else { 0 });
    if threads > 0 {
        // ignore failure: the pool may already be initialized in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_workers(workers: Option<usize>, _training: bool) {
    if workers.map(|w| w > 1).unwrap_or(false) {
        eprintln!("note: built without the parallel feature; --workers ignored");
    }
}
