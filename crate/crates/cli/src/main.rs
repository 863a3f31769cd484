use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use safespeed_cli::{run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "safespeed",
    version,
    about = "Weather-responsive freeway speed recommendations"
)]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true, default_value = "safespeed.toml")]
    config: PathBuf,
    /// Override the master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate a synthetic scenario with known speed quantiles
    Synth,
    /// Match, window and align raw inputs into window records
    Prepare,
    /// Fit the quantile forest on the training split
    Train,
    /// Write per-window recommended speed ranges for the test split
    Recommend,
    /// Score the forest and baselines on the test split
    Evaluate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Synth => Command::Synth,
        Cmd::Prepare => Command::Prepare,
        Cmd::Train => Command::Train,
        Cmd::Recommend => Command::Recommend,
        Cmd::Evaluate => Command::Evaluate,
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
    };
    let result = RunConfig::load(&cli.config, &overrides).and_then(|cfg| run(command, &cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
