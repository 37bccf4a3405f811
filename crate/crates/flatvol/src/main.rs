use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flatvol::{execute, Command, LoadedConfig, Overrides, RunConfig};

/// Volatility-adjusted factor portfolios with maximally flat volatility filters.
#[derive(Debug, Parser)]
#[command(name = "flatvol", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML config, or the manifest.json of an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides [report] out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for the synthetic panel.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Reject negative or over-unit lag weights instead of clipping them.
    #[arg(long, global = true)]
    strict_weights: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Lag-weight and frequency-response tables for the filter.
    Design,
    /// Per-ticker volatility panel.
    Vol,
    /// Six-estimator backtest comparison.
    Compare,
    /// Backtests of rank buckets.
    Quantile,
    /// Portfolio against the benchmark index.
    Benchmark,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Design => Command::Design,
            Cmd::Vol => Command::Vol,
            Cmd::Compare => Command::Compare,
            Cmd::Quantile => Command::Quantile,
            Cmd::Benchmark => Command::Benchmark,
        }
    }
}

fn run(cli: Cli) -> flatvol::Result<PathBuf> {
    let mut loaded = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => LoadedConfig {
            config: RunConfig::default(),
            expected_inputs: None,
        },
    };
    loaded.config.apply(&Overrides {
        out: cli.out,
        seed: cli.seed,
        strict_weights: cli.strict_weights,
    });
    execute(cli.command.into(), &loaded)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
