//! `fsde`: simulate, estimate, sweep and validate from a TOML config.
//!
//! Exit codes: 0 on success, 1 on a runtime or validation failure, 2 on a
//! usage or configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsde_core::Exec;
use thiserror::Error;

use crate::commands::Output;
use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fsde_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fsde", version, about = "Drift estimation for SDEs driven by fractional Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the training sample of coupled paths.
    Simulate(RunArgs),
    /// Simulate, fit the drift (or its derivative) and score the fit.
    Estimate(RunArgs),
    /// Monte Carlo risk over several sample sizes and the log-log slope.
    Sweep(RunArgs),
    /// Run the built-in oracle suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `sample.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Multiplies α_H in the closed-form OU variance (negative control).
    #[arg(long, hide = true, default_value_t = 1.0)]
    alpha_scale: f64,
}

fn executor(jobs: usize) -> Exec {
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    Exec::from_jobs(jobs)
}

fn run_config(args: &RunArgs, sweep: bool) -> Result<(RunConfig, Output, Exec), CliError> {
    if args.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.sample.seed = seed;
    }
    if sweep {
        config.check_sweep()?;
    }
    let out = Output::prepare(&args.out, args.force)?;
    Ok((config, out, executor(args.jobs)))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let (config, out, exec) = run_config(&args, false)?;
            commands::simulate(&config, &out, exec).map(|_| true)
        }
        Command::Estimate(args) => {
            let (config, out, exec) = run_config(&args, false)?;
            commands::estimate(&config, &out, exec).map(|_| true)
        }
        Command::Sweep(args) => {
            let (config, out, exec) = run_config(&args, true)?;
            commands::sweep(&config, &out, exec).map(|_| true)
        }
        Command::Validate(args) => {
            if args.jobs == 0 {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            commands::validate(args.seed, args.alpha_scale, executor(args.jobs))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
