//! Batch front door for the wave-formulation laboratory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavelab::cli::{self, CliOptions, Command};

#[derive(Parser)]
#[command(
    name = "wavelab",
    about = "Lagrangian, Hamiltonian and mixed finite element discretizations \
             of linear waves, with executable scheme-equivalence checks",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Cli,
}

#[derive(Subcommand)]
enum Cli {
    /// Time-step one formulation and record state and energy.
    Run(CommonOpts),
    /// Run two discretizations side by side and report their discrepancy.
    Compare(CommonOpts),
    /// Audit discrete energy conservation along a run.
    Energy(CommonOpts),
    /// Scan time steps for stability and locate the explicit threshold.
    Cfl(CommonOpts),
    /// Mesh-refinement convergence study against the standing wave.
    Converge(CommonOpts),
    /// Largest generalized eigenvalue of the stability pencil.
    Spectrum(CommonOpts),
}

#[derive(clap::Args)]
struct CommonOpts {
    /// Path to the run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `dir` from [output], else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump assembled matrices in coordinate format.
    #[arg(long)]
    export_matrices: bool,
    /// Override the command's pass/fail tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed forwarded to randomized property tests; recorded in reports.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (command, opts) = match args.command {
        Cli::Run(o) => (Command::Run, o),
        Cli::Compare(o) => (Command::Compare, o),
        Cli::Energy(o) => (Command::Energy, o),
        Cli::Cfl(o) => (Command::Cfl, o),
        Cli::Converge(o) => (Command::Converge, o),
        Cli::Spectrum(o) => (Command::Spectrum, o),
    };
    let code = cli::execute(
        command,
        &CliOptions {
            config_path: opts.config,
            out_dir: opts.out,
            export_matrices: opts.export_matrices,
            tol: opts.tol,
            seed: opts.seed,
        },
    );
    ExitCode::from(code.clamp(0, 255) as u8)
}
