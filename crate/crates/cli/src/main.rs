// SPDX-License-Identifier: Apache-2.0

//! `diffplace`: generate synthetic circuits, train the denoiser, sample and
//! score placements, and convert benchmark files.

mod chart;
mod commands;
mod config;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "diffplace", version, about = "Macro placement by graph denoising diffusion")]
struct Cli {
    /// TOML file with per-command defaults (`[gen]`, `[train]`, `[model]`,
    /// `[sample]`, `[guidance]`). Flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(commands::gen::GenArgs),
    /// Train a denoiser on a dataset, or continue from a checkpoint.
    Train(commands::train::TrainArgs),
    /// Sample placements with a trained model.
    Sample(commands::sample::SampleArgs),
    /// Score placements (legality, wirelength, congestion).
    Eval(commands::eval::EvalArgs),
    /// Draw a placement or a denoising trajectory as SVG.
    Render(commands::render::RenderArgs),
    /// Convert Bookshelf benchmarks, optionally clustering standard cells.
    Convert(commands::convert::ConvertArgs),
    /// Evaluate one model across a sweep of generator parameters.
    Study(commands::study::StudyArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {:#}", e);
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen::run(a, &file, &argv),
        Command::Train(a) => commands::train::run(a, &file, &argv),
        Command::Sample(a) => commands::sample::run(a, &file, &argv),
        Command::Eval(a) => commands::eval::run(a, &file, &argv),
        Command::Render(a) => commands::render::run(a, &argv),
        Command::Convert(a) => commands::convert::run(a, &argv),
        Command::Study(a) => commands::study::run(a, &file, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
