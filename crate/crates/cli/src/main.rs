//! `isolab`: batch runs of the isoperimetric experiments.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 a numerical
//! check failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "isolab", version, about = "Relative isoperimetric experiments in cone-based convex bodies")]
struct Cli {
    /// TOML config file with flat keys; `ISOLAB_<KEY>` variables override it.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the profile curve from the configured rate and verify it.
    BuildPhi,
    /// Estimate a reference profile (`preset`) and check it against its closed form.
    Profile,
    /// Slope constants for each height in `alphas`.
    EstimateA3,
    /// The full escape pipeline: slope constants, rate, curve, sliding windows.
    Escape,
    /// Coarse run of every invariant.
    Check,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(isolab::Error),
    Contract(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) | CliError::Contract(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Contract(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<isolab::Error> for CliError {
    fn from(e: isolab::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    // results do not depend on the pool size; it only bounds CPU use
    if rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global().is_err() {
        log::warn!("worker pool already initialised");
    }
    match cli.command {
        Command::BuildPhi => commands::build_phi(&cfg),
        Command::Profile => commands::profile(&cfg),
        Command::EstimateA3 => commands::estimate_a3_cmd(&cfg),
        Command::Escape => commands::escape(&cfg),
        Command::Check => commands::check(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
