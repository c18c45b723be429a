//! `tck`: train and evaluate time series cluster kernels on data with missing values.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{EvalArgs, GenerateArgs, ReproduceArgs, TrainArgs};

#[derive(Parser)]
#[command(
    name = "tck",
    version,
    about = "Time series cluster kernels for data with missing values"
)]
struct Cli {
    /// Worker threads for ensemble fitting (default: all cores).
    #[arg(long, global = true, env = "TCK_THREADS")]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset or inject missingness into an existing one.
    Generate(GenerateArgs),
    /// Fit a kernel ensemble and save it with the training kernel.
    Train(TrainArgs),
    /// Score a saved model on test data, or cross-validate a variant.
    Eval(EvalArgs),
    /// Rerun a benchmark table.
    Reproduce(ReproduceArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Reproduce(a) => commands::reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
