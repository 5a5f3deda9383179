//! `nvcav`: ODMR curves, cavity evaluations, parameter sweeps, optimization
//! and the reference validation suite, driven by one TOML file.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "nvcav", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; library defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Spin-noise fraction for the feasibility flag.
    #[arg(long, global = true)]
    spin_fraction: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state ODMR curve and its contrast and linewidth.
    Odmr {
        #[arg(long, value_enum, default_value_t = Observable::Ir)]
        observable: Observable,
        /// Fluorescence contrast against the optical saturation parameter.
        #[arg(long)]
        saturation_scan: bool,
    },
    /// Sensitivity of the configured cavity.
    Evaluate,
    /// Sensitivity over the `[sweep]` grid.
    Sweep,
    /// Differential-evolution search over the `[optimizer.bounds]` box.
    Optimize,
    /// Reference checks; exits 1 if any fails.
    Validate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Observable {
    Ir,
    Fluorescence,
}

pub enum Failure {
    Validation,
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<nvcav::Error> for Failure {
    fn from(e: nvcav::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("output: {e}"))
    }
}

fn resolve(cli: &Cli) -> Result<(RunConfig, usize), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(f) = cli.spin_fraction {
        if !(f.is_finite() && f > 0.0) {
            return Err(Failure::Config(format!("--spin-fraction must be positive, got {f}")));
        }
        cfg.evaluation.spin_fraction = f;
    }
    let workers = match cli.workers {
        Some(0) => return Err(Failure::Config("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok((cfg, workers))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (cfg, workers) = resolve(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Failure::Runtime(format!("worker pool: {e}")))?;
    let ctx = commands::Context { cfg, workers };
    match cli.command {
        Command::Odmr {
            observable,
            saturation_scan,
        } => commands::odmr(&ctx, observable, saturation_scan),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Optimize => commands::optimize(&ctx),
        Command::Validate => commands::validate(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation => eprintln!("nvcav: validation failed"),
                Failure::Config(m) => eprintln!("nvcav: config error: {m}"),
                Failure::Runtime(m) => eprintln!("nvcav: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
