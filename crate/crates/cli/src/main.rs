//! `neqrad` command-line front end.
//!
//! Exit codes: 0 success, 2 a verdict failed, 3 numerical failure, 4 bad
//! configuration or I/O.

// `!(x > 0.0)` is used on purpose: NaN must fail these checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "neqrad", version, about = "Dissipativity checks, spectra and decay experiments for radiation hydrodynamics")]
pub struct Cli {
    /// JSON configuration; every field is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files; results go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Format written to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Samples the equation of state and checks the thermodynamic hypotheses.
    EosCheck,
    /// Prints the linearized matrix families at an equilibrium state.
    Assemble {
        /// Only this matrix (e.g. `A0`, `L_bar`, `B_t`).
        #[arg(long)]
        matrix: Option<String>,
    },
    /// Decides genuine coupling and, in 1D, builds a compensating matrix.
    Coupling,
    /// Eigenvalue branches of the Fourier symbol over a wavenumber grid.
    Spectrum,
    /// Decay of the linearized problem from Gaussian data.
    LinearDecay,
    /// Runs the nonlinear 1D solver and records diagnostics.
    Simulate,
    /// Nonlinear decay experiment with a fitted rate.
    Decay,
    /// Runs a suite of experiments and writes `report.json` and `report.md`.
    Report,
}

/// How a command ended when it did not error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    VerdictFailed,
    NumericalFailure,
    BadConfig,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::VerdictFailed => 2,
            Status::NumericalFailure => 3,
            Status::BadConfig => 4,
        }
    }

    pub fn from_verdict(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::VerdictFailed
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
