//! Command-line front end: benchmark evaluation, dataset labeling, and
//! report rendering.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::eval::{cmd_eval, EvalArgs, EvalMode};
use commands::label::{cmd_label, LabelArgs};
use commands::report::{cmd_report, ReportArgs, ReportFormatArg};
use config::load_config;

#[derive(Parser)]
#[command(
    name = "prmkit",
    about = "Step-level critique, refined best-of-N inference, and Monte Carlo labeling for reasoning models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a benchmark under a sampling/selection mode.
    Eval {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Benchmark JSONL file.
        #[arg(long)]
        benchmark: PathBuf,
        /// Selection mode.
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Pool size N (even); overrides the config.
        #[arg(long)]
        n: Option<usize>,
        /// Root seed; all per-problem and per-sample seeds derive from it.
        #[arg(long)]
        seed: Option<u64>,
        /// Step-score aggregation: avg, min, or max.
        #[arg(long)]
        aggregation: Option<String>,
        /// Run directory (defaults under the configured run_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate config and backend health without issuing generation
        /// requests.
        #[arg(long)]
        dry_run: bool,
    },
    /// Build a step-supervision dataset from a solutions file.
    Label {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Solutions JSONL input.
        #[arg(long)]
        solutions: PathBuf,
        /// Rollouts per step; overrides the config.
        #[arg(long)]
        m: Option<usize>,
        /// Root seed for completer rollouts.
        #[arg(long)]
        seed: Option<u64>,
        /// Output dataset path.
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint file (defaults next to the output).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Keep only these problem categories (repeatable).
        #[arg(long = "category")]
        categories: Vec<String>,
    },
    /// Re-render reports from a persisted run.
    Report {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        /// Output format.
        #[arg(long, value_enum, default_value = "all")]
        format: ReportFormatArg,
    },
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Eval {
            config,
            benchmark,
            mode,
            n,
            seed,
            aggregation,
            out,
            dry_run,
        } => {
            let loaded = load_config(&config)?;
            cmd_eval(
                &loaded,
                &EvalArgs {
                    benchmark,
                    mode,
                    n,
                    seed,
                    aggregation,
                    out,
                    dry_run,
                },
            )
            .await?;
        }
        Command::Label {
            config,
            solutions,
            m,
            seed,
            out,
            checkpoint,
            categories,
        } => {
            let loaded = load_config(&config)?;
            cmd_label(
                &loaded,
                &LabelArgs {
                    solutions,
                    m,
                    seed,
                    out,
                    checkpoint,
                    categories,
                },
            )
            .await?;
        }
        Command::Report { run, format } => {
            cmd_report(&ReportArgs { run, format })?;
        }
    }
    Ok(())
}
