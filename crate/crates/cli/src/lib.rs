//! `screwsim` command-line tool: experiment sweeps, calibration, bus
//! analysis, scenario runs and the teleoperation server.
//!
//! Exit codes: 0 success, 1 a result is outside tolerance, 2 usage or
//! configuration error.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::{Context, Defaults};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] screwsim_core::Error),
    #[error(transparent)]
    Teleop(#[from] screwsim_teleop::TeleopError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        2
    }
}

/// How a successful command ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    /// Ran to completion but a result is outside tolerance.
    OutOfTolerance(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::OutOfTolerance(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "screwsim", version, about = "Screw-propelled snake robot simulator")]
pub struct Cli {
    /// Directory with defaults.toml, observations and terrain/ profiles
    /// [env: SCREWSIM_CONFIG_DIR; default: ./data]
    #[arg(long, global = true)]
    pub config_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fitted vs commanded turning radius in tunneling mode.
    SweepTunneling(SweepTunnelingArgs),
    /// Mean speed (and turning radius) per M-configuration angle.
    SweepMconfig(SweepMConfigArgs),
    /// Segment-count feasibility of the daisy-chained bus.
    BusAnalyze(BusAnalyzeArgs),
    /// Fit terrain profiles to observed speeds.
    Calibrate(CalibrateArgs),
    /// Run the teleoperation WebSocket server.
    Serve(ServeArgs),
    /// Run a scenario file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SweepTunnelingArgs {
    /// Commanded radii (m), comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub radii: Option<Vec<f64>>,
    /// Terrain profile name or file.
    #[arg(long)]
    pub terrain: Option<String>,
    /// CSV output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest relative radius error before exiting with 1.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Screw throttle in [-1, 1].
    #[arg(long)]
    pub speed: Option<f64>,
    /// Heading swept per radius (deg).
    #[arg(long)]
    pub sweep_deg: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepMConfigArgs {
    /// M angles θ_m (deg), comma separated, each in (90, 180].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub angles: Option<Vec<f64>>,
    #[arg(long)]
    pub terrain: Option<String>,
    /// Seconds per run.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Target turning radius (m); straight if omitted, 0 turns in place.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Fastest screw's throttle in [-1, 1].
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BusAnalyzeArgs {
    /// Main loop rate (Hz).
    #[arg(long)]
    pub rate: Option<f64>,
    /// Largest chain length to tabulate.
    #[arg(long)]
    pub max_n: Option<usize>,
    #[arg(long)]
    pub base_rtt: Option<f64>,
    #[arg(long)]
    pub per_hop: Option<f64>,
    #[arg(long)]
    pub jitter_sd: Option<f64>,
    /// Scheduling report file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also simulate the bus and write its message trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Segments in the traced chain.
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    /// Traced virtual time (ms).
    #[arg(long, default_value_t = 1000.0)]
    pub duration_ms: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Observation CSV (surface,mode,theta_m_deg,speed_mps,exclude).
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Where profiles and residuals.csv go (default: <config-dir>/terrain).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub lateral_damping: Option<f64>,
    /// Hold κ_a fixed and fit only the slip.
    #[arg(long)]
    pub fix_kappa: Option<f64>,
    /// Exit with 1 if a fitted row's |residual| exceeds this (m/s).
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long)]
    pub terrain: Option<String>,
    #[arg(long)]
    pub device_limit_deg: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary document (stdout if omitted).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let ctx = Context::load(Context::resolve_dir(cli.config_dir))?;
    match cli.command {
        Command::SweepTunneling(a) => commands::sweep::tunneling(&ctx, a),
        Command::SweepMconfig(a) => commands::sweep::mconfig(&ctx, a),
        Command::BusAnalyze(a) => commands::bus::analyze(&ctx, a),
        Command::Calibrate(a) => commands::calibrate::calibrate(&ctx, a),
        Command::Serve(a) => commands::serve::serve(&ctx, a),
        Command::Run(a) => commands::run::run(&ctx, a),
    }
}

/// Opens `path` for writing, or stdout.
pub(crate) fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            Ok(Box::new(File::create(p).map_err(|e| CliError::io(p, e))?))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}
