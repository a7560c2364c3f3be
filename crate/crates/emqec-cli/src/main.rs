//! Batch orchestration CLI: configuration parsing, sweep execution,
//! deterministic seeding and CSV/JSON emission.

mod commands;
mod config;

use anyhow::Result;
use clap::{Parser, Subcommand};
use config::{CliOverrides, FileConfig, RunConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "emqec",
    about = "Emission-based modular surface-code simulator",
    version
)]
struct Cli {
    /// Structured configuration file (TOML, with include support).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Monte-Carlo shots override.
    #[arg(long, global = true)]
    shots: Option<u64>,

    /// Photon-number-resolving detectors.
    #[arg(long, global = true, overrides_with = "no_pnr")]
    pnr: bool,

    /// Threshold (click/no-click) detectors.
    #[arg(long, global = true)]
    no_pnr: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run protocol sweeps (bright-state, coherence, hardware sets, dual-alpha).
    Protocols,
    /// Build and export a superoperator table.
    Table,
    /// Run the logical-error-rate grid from a table CSV.
    Qec {
        /// Superoperator table CSV.
        #[arg(long)]
        table: PathBuf,
    },
    /// Fit the threshold from a logical-rate CSV.
    Fit {
        /// Rate CSV produced by `qec` or `pipeline`.
        #[arg(long)]
        rates: PathBuf,
    },
    /// End-to-end: tables per error rate, QEC grid, threshold fit.
    Pipeline,
    /// Print the closed-form success/fidelity oracle rows.
    Oracle,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let overrides = CliOverrides {
        seed: cli.seed,
        out: cli.out.clone(),
        shots: cli.shots,
        pnr: if cli.no_pnr {
            Some(false)
        } else if cli.pnr {
            Some(true)
        } else {
            None
        },
    };
    let cfg = RunConfig::resolve(file, overrides)?;
    let path = match &cli.command {
        Command::Protocols => commands::cmd_protocols(&cfg)?,
        Command::Table => commands::cmd_table(&cfg)?,
        Command::Qec { table } => commands::cmd_qec(&cfg, table)?,
        Command::Fit { rates } => commands::cmd_fit(&cfg, rates)?,
        Command::Pipeline => commands::cmd_pipeline(&cfg)?,
        Command::Oracle => commands::cmd_oracle(&cfg)?,
    };
    println!("{}", path.display());
    Ok(())
}
