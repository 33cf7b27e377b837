//! `fairsel` CLI: runs the experiments described by a flat key-value
//! config file and writes CSV (and optionally SVG) output.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when a
//! resource guard rejects the run, 1 otherwise.

use clap::{Args, Parser, Subcommand};
use fairsel::experiments::{
    self, config::ExperimentConfig, ExperimentError, ExperimentKind,
};
use fairsel::selection::SelectionError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fairsel",
    about = "Committee selection from biased rankings: recovery, scaling, r_ell, and smoothness experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fraction of the latent optimum recovered under swapping bias.
    Recovery(RunArgs),
    /// Smoothness estimates (alpha, gamma over a beta grid) per rule.
    Smoothness(RunArgs),
    /// Smallest voter count reaching 1 - epsilon recovery, per bias level.
    Scaling(RunArgs),
    /// Best achievable optimum fraction with the optimal disadvantaged
    /// members excluded.
    #[command(name = "r-ell")]
    REll(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description file (one `key = value` per line).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional SVG chart path.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Recovery(args) => (ExperimentKind::Recovery, args),
        Command::Smoothness(args) => (ExperimentKind::Smoothness, args),
        Command::Scaling(args) => (ExperimentKind::Scaling, args),
        Command::REll(args) => (ExperimentKind::REll, args),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fairsel: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<(), ExperimentError> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| {
            ExperimentError::Config("no output path: pass --out or set `out` in the config".into())
        })?;

    match kind {
        ExperimentKind::Recovery => {
            let rows = experiments::run_recovery(&config)?;
            experiments::write_recovery_csv(&rows, &out)?;
            if let Some(plot) = &args.plot {
                experiments::plot_recovery(&rows, plot)?;
            }
            eprintln!("fairsel: wrote {} rows to {}", rows.len(), out.display());
        }
        ExperimentKind::Smoothness => {
            let rows = experiments::run_smoothness(&config)?;
            experiments::write_smoothness_csv(&rows, &out)?;
            if let Some(plot) = &args.plot {
                experiments::plot_smoothness(&rows, plot)?;
            }
            eprintln!("fairsel: wrote {} rows to {}", rows.len(), out.display());
        }
        ExperimentKind::Scaling => {
            let rows = experiments::run_scaling(&config)?;
            experiments::write_scaling_csv(&rows, &out)?;
            if let Some(plot) = &args.plot {
                experiments::plot_scaling(&rows, plot)?;
            }
            eprintln!("fairsel: wrote {} rows to {}", rows.len(), out.display());
        }
        ExperimentKind::REll => {
            let rows = experiments::run_r_ell(&config)?;
            experiments::write_rell_csv(&rows, &out)?;
            if let Some(plot) = &args.plot {
                experiments::plot_rell(&rows, plot)?;
            }
            eprintln!("fairsel: wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) => 2,
        ExperimentError::Resource(_) => 3,
        ExperimentError::Selection(SelectionError::BruteForceGuard { .. }) => 3,
        ExperimentError::Gen(_) | ExperimentError::Rule(_) => 2,
        _ => 1,
    }
}
