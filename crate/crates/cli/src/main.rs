//! `dynamic-ambiguity`: radii, sampling horizons, observability diagnostics
//! and the UAV experiment from JSON configs.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod horizon;
mod observe;
mod output;
mod radius;
mod uav;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::{config_err, load_config, CliResult, OutputDir};

#[derive(Debug, Parser)]
#[command(name = "dynamic-ambiguity", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,
    /// Worker threads for realization-parallel commands (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate eps_N, bar_eps_N and psi_N over a range of N (CSV).
    Radius(Common),
    /// Effective sampling horizon with per-kappa margins (JSON and CSV).
    Horizon(Common),
    /// Observability diagnostics and reconstruction check (JSON).
    Observe(Common),
    /// Dynamic vs static DRO experiment (CSV and summary JSON).
    Uav(Common),
}

fn dispatch(cmd: &Command) -> CliResult<()> {
    let common = match cmd {
        Command::Radius(c) | Command::Horizon(c) | Command::Observe(c) | Command::Uav(c) => c,
    };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = common.jobs {
            if j == 0 {
                return Err(config_err("--jobs must be at least 1"));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(config_err)?
    };
    let out = || OutputDir::create(&common.out);
    match cmd {
        Command::Radius(c) => radius::run(&load_config(&c.config)?, &out()?, c.seed),
        Command::Horizon(c) => horizon::run(&load_config(&c.config)?, &out()?, c.seed),
        Command::Observe(c) => observe::run(&load_config(&c.config)?, &out()?, c.seed),
        Command::Uav(c) => {
            let cfg = load_config(&c.config)?;
            let dir = out()?;
            pool.install(|| uav::run(&cfg, &dir, c.seed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dynamic-ambiguity: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
