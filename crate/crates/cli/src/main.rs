use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "chanae", version, about = "Train and evaluate channel autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ExportWhat {
    /// Encoder synthesis kernels.
    Basis,
    /// One transmitted and received frame.
    Signals,
}

#[derive(clap::Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every seed the config leaves out.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint.json and history.csv.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Measure BER of a checkpoint and write ber.csv with baseline rows.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and sweep one model per grid value.
    Study {
        #[command(flatten)]
        common: Common,
        /// training_snr, dropout, delay_spread or random_phase; overrides the config.
        #[arg(long)]
        kind: Option<String>,
        /// Comma-separated grid values; overrides the config.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        grid: Option<Vec<f64>>,
    },
    /// Finite-difference check of every differentiable operation.
    Gradcheck {
        /// Scale activation derivatives by 1.01 (negative control).
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
    /// Analytic QPSK and QAM16 curves, optionally with a QPSK simulation.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Bits per SNR point for a simulated QPSK curve.
        #[arg(long)]
        monte_carlo_bits: Option<u64>,
    },
    /// Write learned basis functions or an example signal.
    Export {
        what: ExportWhat,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Channel SNR for `signals`; the checkpoint's channel SNR by default.
        #[arg(long, allow_negative_numbers = true)]
        snr_db: Option<f64>,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CHANAE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("CHANAE_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Train { common } => commands::train(&common).map(|_| true),
        Command::Sweep { common, checkpoint } => commands::sweep(&common, &checkpoint).map(|_| true),
        Command::Study { common, kind, grid } => commands::study(&common, kind.as_deref(), grid).map(|_| true),
        Command::Gradcheck { corrupt_backward } => commands::gradcheck(corrupt_backward),
        Command::Baseline {
            common,
            monte_carlo_bits,
        } => commands::baseline(&common, monte_carlo_bits).map(|_| true),
        Command::Export {
            what,
            common,
            checkpoint,
            snr_db,
        } => commands::export(what, &common, &checkpoint, snr_db).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
