//! Command-line front end: loads a run configuration, dispatches one command and
//! writes its CSV/JSON artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::Parser;

use crate::commands::{CliError, Command};
use crate::config::RunConfig;

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_UNDECIDED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "boundstate", version, about = "Shooting, classification and functional traces for radial bound states")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `shoot.tol`.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Exit with status 4 on undecided outcomes.
    #[arg(long)]
    pub strict: bool,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs `cli`, printing the summary to stdout and diagnostics to stderr. Returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match effective_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match commands::run(cli.command, &cfg, &cli.out) {
        Ok(o) => {
            println!("{}", o.summary);
            if cli.strict && o.undecided {
                EXIT_UNDECIDED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) | CliError::Write(_) => EXIT_CONFIG,
                CliError::Numeric(n) if n.is_undecided() && cli.strict => EXIT_UNDECIDED,
                CliError::Numeric(_) => EXIT_NUMERIC,
            }
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(config::ConfigError::new("--tol", "must be positive and finite").into());
        }
        cfg.shoot.tol = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}
