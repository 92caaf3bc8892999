use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphnas_core::harness::{cmd_derive, cmd_random, cmd_report, cmd_search, cmd_train, Overrides, RunConfig};
use graphnas_core::Result;

/// Architecture search over graph neural networks.
///
/// Settings come from a flat JSON config file; flags take precedence over
/// the file, and the file over built-in defaults.
#[derive(Parser, Debug)]
#[command(name = "graphnas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `strategy` (graphnas, random, nas-like, enas-like).
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a search and write search.log, topk.csv, summary.json and checkpoints.
    Search(Common),
    /// Sample from a saved controller and retrain the best candidate.
    Derive(Common),
    /// Train one architecture given as a token string.
    Train {
        #[command(flatten)]
        common: Common,
        /// One line per layer, or layers separated by `;`.
        #[arg(long)]
        arch: String,
    },
    /// Random search baseline.
    Random(Common),
    /// Aggregate run directories into report.csv and curve files.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories, each holding a search.log.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides { seed: common.seed, out: common.out.clone(), strategy: common.strategy.clone() })?;
    Ok(config)
}

fn pretty<S: serde::Serialize>(value: &S) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Search(c) => pretty(&cmd_search(&load(&c)?)?),
        Command::Random(c) => pretty(&cmd_random(&load(&c)?)?),
        Command::Derive(c) => pretty(&cmd_derive(&load(&c)?)?),
        Command::Train { common, arch } => pretty(&cmd_train(&load(&common)?, &arch)?),
        Command::Report { common, runs } => pretty(&cmd_report(&load(&common)?, &runs)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
