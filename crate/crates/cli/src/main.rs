//! `scrm` command line: synthetic corpora, relation graphs, training,
//! evaluation and ablation sweeps over session behavior logs.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

/// Command failures split by whose fault they are: bad input or
/// configuration exits with 2, anything else (output I/O, internal) with 1.
#[derive(Debug)]
pub enum CliError {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::User(e) | CliError::Internal(e) => e,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(e)
    }
}

/// Mark an error as the caller's problem (exit code 2).
pub fn user(e: impl Into<anyhow::Error>) -> CliError {
    CliError::User(e.into())
}

#[derive(Parser)]
#[command(
    name = "scrm",
    version,
    about = "session-based recommendation over substitutable and complementary item graphs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic behavior log with planted item relations.
    Synth(Overrides),
    /// Build the relation graphs from an event log and write them as TSVs.
    BuildGraphs(Overrides),
    /// Train a model and write a checkpoint plus a per-epoch JSONL log.
    Train(Overrides),
    /// Score a checkpoint on the test split and write a metric report.
    Evaluate(EvalArgs),
    /// Train and score the full model and every single-switch variant.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Also score popularity and item-kNN baselines into the report.
    #[arg(long)]
    with_baselines: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Training seeds; reported metrics are averaged across them.
    #[arg(long, value_delimiter = ',', default_value = "42,43,44")]
    seeds: Vec<u64>,
    /// Cutoff K for the comparison metric.
    #[arg(long, default_value_t = 10)]
    report_k: usize,
}

fn resolve(ov: &Overrides) -> Result<config::RunConfig, CliError> {
    ov.resolve().map_err(CliError::User)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Synth(ov) => commands::cmd_synth(&resolve(&ov)?),
        Cmd::BuildGraphs(ov) => commands::cmd_build_graphs(&resolve(&ov)?),
        Cmd::Train(ov) => commands::cmd_train(&resolve(&ov)?),
        Cmd::Evaluate(a) => commands::cmd_evaluate(&resolve(&a.overrides)?, a.with_baselines),
        Cmd::Ablate(a) => commands::cmd_ablate(&resolve(&a.overrides)?, &a.seeds, a.report_k),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    // All compute is sequential, so any honored thread count yields
    // bit-identical results; the variable is accepted for compatibility.
    if let Ok(v) = std::env::var("SCRM_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                log::info!("SCRM_THREADS={n} requested; compute runs sequentially")
            }
            _ => {
                eprintln!("error: SCRM_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.inner());
            ExitCode::from(e.code())
        }
    }
}
