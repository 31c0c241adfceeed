//! `qfm`: noise estimation and noise-adaptive flow-matching denoising.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{calibrate, denoise, evaluate, noise, train, Common};

#[derive(Debug, Parser)]
#[command(name = "qfm", version, about)]
struct Cli {
    /// JSON file with default settings for the subcommand; flags win over it.
    /// A `.run.json` record from an earlier run also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw [default: $QFM_SEED, else 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo estimate of the range and middle-range constants
    Calibrate(calibrate::CalibrateArgs),
    /// Add white Gaussian noise to an image
    AddNoise(noise::AddNoiseArgs),
    /// Estimate the noise standard deviation of an image
    EstimateNoise(noise::EstimateArgs),
    /// Train an MLP vector field on clean images
    Train(train::TrainArgs),
    /// Denoise one image with a trained field
    Denoise(denoise::DenoiseArgs),
    /// Sweep noise levels over a directory and write a metrics CSV
    Evaluate(evaluate::EvaluateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let common = Common {
        config: cli.config,
        seed: cli.seed,
    };
    let result = match &cli.command {
        Command::Calibrate(a) => calibrate::run(a, &common),
        Command::AddNoise(a) => noise::add_noise(a, &common),
        Command::EstimateNoise(a) => noise::estimate(a, &common),
        Command::Train(a) => train::run(a, &common),
        Command::Denoise(a) => denoise::run(a, &common),
        Command::Evaluate(a) => evaluate::run(a, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
