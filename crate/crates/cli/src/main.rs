//! `sqlink`: simulate fading-channel squeezed-light records, postselect them
//! by transmission, reconstruct the state, and export Wigner data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod sidecar;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sqlink::Parallelism;

use crate::commands::{Context, TomoSource};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sqlink", version, about)]
struct Cli {
    /// Experiment configuration (JSON); omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a detector record stream (records.csv).
    Simulate {
        /// Produce the tomography angle scan at the selected transmission.
        #[arg(long)]
        scan: bool,
    },
    /// Postselect records by transmission and fit the scaling laws.
    Bin {
        /// Record CSV from `simulate`.
        records: PathBuf,
    },
    /// Reconstruct the density matrix by maximum likelihood.
    Tomo {
        /// Record CSV holding the angle scan.
        #[arg(required_unless_present_any = ["tomograms", "exact"])]
        records: Option<PathBuf>,
        /// Read a tomogram set (JSON) instead of records.
        #[arg(long, conflicts_with_all = ["records", "exact"])]
        tomograms: Option<PathBuf>,
        /// Use exact bin probabilities of the configured state after loss.
        #[arg(long, conflicts_with = "records")]
        exact: bool,
    },
    /// Evaluate the Wigner function and its 1/e contours.
    Wigner {
        /// Density matrix JSON, e.g. rho.json from `tomo`.
        rho: PathBuf,
    },
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(CliError::Validation(format!(
            "invalid configuration:\n  {}",
            problems.join("\n  ")
        )));
    }
    Ok(config)
}

fn run(cli: Cli) -> CliResult<()> {
    let config = load_config(&cli)?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", cli.out.display())))?;
    let ctx = Context {
        config,
        out: cli.out.clone(),
        par: if cli.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::default()
        },
    };
    match &cli.command {
        Command::Simulate { scan } => commands::simulate(&ctx, *scan),
        Command::Bin { records } => commands::bin(&ctx, records),
        Command::Tomo {
            records,
            tomograms,
            exact,
        } => {
            let source = match (records, tomograms) {
                (Some(r), _) => TomoSource::Records(r),
                (None, Some(t)) => TomoSource::Tomograms(t),
                (None, None) if *exact => TomoSource::Exact,
                (None, None) => unreachable!("clap requires a data source"),
            };
            commands::tomo(&ctx, source)
        }
        Command::Wigner { rho } => commands::wigner_cmd(&ctx, rho),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
