//! `selfsim`: command-line front end of the profile pipeline.
//!
//! Exit codes: 0 success, 2 validation, 3 numerical failure, 4 regime exit.

mod commands;
mod config;
mod error;
mod output;
mod profile_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "selfsim", version, about = "Self-similar blow-up profiles of the supercritical heat flow: construction, spectra and dynamics")]
pub struct Cli {
    /// TOML run configuration with one table per module; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for scans and spectra (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the closed-form constants of the exponent as JSON.
    Params {
        /// Nonlinearity exponent, p > 5.
        #[arg(long)]
        p: Option<f64>,
        /// Also write the JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the ground state and write (r, Q, Q', ΛQ) plus a JSON sidecar.
    Groundstate {
        #[arg(long)]
        p: Option<f64>,
        /// Outer radius of the integration.
        #[arg(long)]
        rmax: Option<f64>,
        /// Integration tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// CSV output; the sidecar goes next to it with a .json extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Matching-scale scan and profile assembly.
    #[command(subcommand)]
    Construct(ConstructCommand),
    /// Low eigenvalues of the linearized operator per spherical harmonic.
    Spectrum {
        /// Profile written by `construct build`.
        #[arg(long)]
        profile: PathBuf,
        /// Comma-separated harmonics, each in 0..=4.
        #[arg(long, value_delimiter = ',')]
        m: Option<Vec<u32>>,
        /// Eigenpairs per harmonic.
        #[arg(long)]
        num: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan the branch-tracked phase Φ(λ) and report its supremum gap.
    PhaseCheck {
        /// Exponent p >= 5, or `inf` for the limit.
        #[arg(long)]
        p: Option<String>,
        /// Grid spacing in λ.
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda_max: Option<f64>,
        /// CSV output (lambda, Phi, Phi_minus_ref).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the renormalized flow from a seeded profile.
    Evolve(EvolveArgs),
    /// Run the full acceptance suite and write a pass/fail report.
    VerifyAll {
        /// Seed of the random test functions.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of random test functions.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConstructCommand {
    /// Sample the derivative mismatch G(λ) and locate its roots.
    Scan {
        #[command(flatten)]
        common: ConstructArgs,
        /// CSV output (lambda, epsilon, G).
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the profile at the k-th root (k = 0 is the largest scale).
    Build {
        #[command(flatten)]
        common: ConstructArgs,
        #[arg(long)]
        k: Option<usize>,
        /// Profile JSON with embedded CSV blocks.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[arg(long)]
    pub p: Option<f64>,
    /// Matching radius.
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    /// Defaults to r0.
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Spacing of the scan in log λ.
    #[arg(long)]
    pub log_step: Option<f64>,
    /// Outer radius of the exterior solution.
    #[arg(long)]
    pub rmax: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// Profile written by `construct build`.
    #[arg(long)]
    pub profile: PathBuf,
    /// Unstable-mode seeds `j=2:1e-6[,j=3:...]`; j = 2 is the most unstable mode.
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// Initial ε as a profile CSV table or plain `r,eps` rows, or `none`.
    #[arg(long, default_value = "none")]
    pub eps_file: String,
    /// Renormalized time span.
    #[arg(long)]
    pub s_max: Option<f64>,
    /// Step in renormalized time.
    #[arg(long)]
    pub ds: Option<f64>,
    /// Initial scale λ(0).
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Tube radius for ‖v‖_∞.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub cells: Option<usize>,
    /// Renormalized outer radius.
    #[arg(long)]
    pub rmax: Option<f64>,
    /// Keep every n-th step.
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::validation("cli", "jobs", "jobs = 0: needs at least one thread"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::numerical("cli", "jobs", e.to_string()))?;
    }
    let cfg = RunConfig::load(cli.config.as_deref())?;
    commands::dispatch(cfg, cli.command)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
