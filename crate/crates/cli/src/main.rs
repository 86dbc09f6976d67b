//! `ounts`: batch runner for simulation, validation, pricing and calibration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ounts::process::Scheme;

use config::{Format, Overrides, RunConfig, CONFIG_HELP};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl From<ounts::error::Error> for CliError {
    fn from(e: ounts::error::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 3,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "ounts", version, about = "Simulation, pricing and calibration of OU-NTS spot models", after_long_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths of the spot S or the OU factor N and write them as CSV.
    Simulate(Common),
    /// Check simulated cumulants and the closed-form characteristic function.
    Validate(Common),
    /// Price the configured call strip, Asian or swing contract.
    Price(Common),
    /// Fit the two-factor model to day-ahead and month-ahead prices.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Run the round-trip self-test on synthetic data instead.
        #[arg(long)]
        synthetic: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML, or JSON such as a calibration output).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, value_name = "N")]
    paths: Option<usize>,
    /// Simulation scheme: exact, approx1 or approx2.
    #[arg(long, value_name = "exact|approx1|approx2")]
    scheme: Option<Scheme>,
    /// Output file; standard output when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn prepare(c: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let (mut cfg, dir) = RunConfig::load(c.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: c.seed,
        paths: c.paths,
        scheme: c.scheme,
        out: c.out.clone(),
        format: c.format,
    });
    cfg.check_threads()?;
    Ok((cfg, dir))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, synthetic) = match &cli.command {
        Command::Simulate(c) | Command::Validate(c) | Command::Price(c) => (c, false),
        Command::Calibrate { common, synthetic } => (common, *synthetic),
    };
    let (cfg, dir) = prepare(common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.run.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("run.threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, &dir),
        Command::Validate(_) => commands::validate(&cfg, &dir),
        Command::Price(_) => commands::price(&cfg, &dir),
        Command::Calibrate { .. } => commands::calibrate_cmd(&cfg, &dir, synthetic),
    })
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
