//! Command-line driver: runs, convergence studies, long-time studies and
//! mesh validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, Config, Overrides, OUT_DIR_ENV};
use error::CliError;

#[derive(Parser)]
#[command(name = "sqra", version, about = "Finite-volume drift-diffusion solver with Butler-Volmer boundaries")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// March one problem in time and write energy, Newton and snapshot files.
    Run(Common),
    /// Spatial convergence study on uniform 1D grids.
    Convergence(Common),
    /// Long-time study: distance to the steady state and its decay rate.
    SteadyState(Common),
    /// Check a triangulation file for admissibility.
    ValidateMesh { path: PathBuf },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the environment and the file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Inverse Péclet number; a comma-separated list for `convergence`.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Uniform time step.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    final_time: Option<f64>,
    /// Uniform 1D grid size; a comma-separated list for `convergence`.
    #[arg(long, value_delimiter = ',')]
    cells: Vec<usize>,
    /// Triangulation file.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Built-in problem: conv-1d, eq-1d, eq-2d or noneq-2d.
    #[arg(long)]
    preset: Option<String>,
}

fn configure(command: Command, c: Common) -> Result<Config, CliError> {
    if c.config.is_none() && c.preset.is_none() {
        return Err(CliError::Usage("nothing to run: pass --preset or --config".into()));
    }
    let mut cfg = match &c.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let overrides = Overrides {
        preset: c.preset,
        epsilon: c.epsilon,
        tau: c.tau,
        final_time: c.final_time,
        cells: c.cells,
        mesh: c.mesh,
        out: c.out,
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    cfg.apply(&overrides, env_out, command)?;
    cfg.resolve(command)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (command, common) = match cli.command {
        Cmd::ValidateMesh { path } => return commands::validate_mesh(&path),
        Cmd::Run(c) => (Command::Run, c),
        Cmd::Convergence(c) => (Command::Convergence, c),
        Cmd::SteadyState(c) => (Command::SteadyState, c),
    };
    let cfg = configure(command, common)?;
    commands::execute(command, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
