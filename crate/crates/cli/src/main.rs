//! `psq`: analytic and simulated response times for batch-arrival PS and TLPS.
//!
//! Exit codes: 0 success, 1 a `compare` row failed, 2 bad input, 3 unstable
//! system. Errors print one line starting with `error:`.

mod commands;
mod format;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "psq",
    version,
    about = "Processor-sharing queue analysis and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roots, coefficients and mean response time; optional x-grid curve.
    Analyze(AnalyzeArgs),
    /// Mean response time of TLPS over a grid of thresholds.
    Sweep(GridArgs),
    /// Sweep, then search for the best threshold.
    Optimize(GridArgs),
    /// Run the discrete-event simulator.
    Simulate(SimArgs),
    /// Simulate and check the analytic values at 3 standard errors.
    Compare(SimArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Write the table here instead of stdout (a `.json` path gets JSON where
    /// supported).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Threshold, overriding the scenario's.
    #[arg(long, value_name = "F")]
    theta: Option<f64>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Emit the response-time curve as CSV.
    #[arg(long)]
    curve: bool,
    #[arg(long, value_name = "F", default_value_t = 0.0)]
    x_min: f64,
    /// Defaults to ten mean job sizes.
    #[arg(long, value_name = "F")]
    x_max: Option<f64>,
    #[arg(long, value_name = "N", default_value_t = 101)]
    x_points: usize,
    /// Print every root with its anchor, offset and residual.
    #[arg(long)]
    dump_roots: bool,
    /// Print the Cauchy solution and the curve coefficients.
    #[arg(long)]
    dump_coefficients: bool,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_name = "F", default_value_t = 0.0)]
    theta_min: f64,
    /// Defaults to a hundred mean job sizes.
    #[arg(long, value_name = "F")]
    theta_max: Option<f64>,
    #[arg(long, value_name = "N", default_value_t = 64)]
    points: usize,
    /// Log-spaced grid (a zero lower end is kept as its own point).
    #[arg(long)]
    log: bool,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Completed jobs per replication, warmup included.
    #[arg(long, value_name = "N")]
    horizon: Option<usize>,
    /// Leading jobs discarded (default: a tenth of the horizon).
    #[arg(long, value_name = "N")]
    warmup: Option<usize>,
    #[arg(long, value_name = "N")]
    replications: Option<usize>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Malformed(String),
    Unstable(String),
    /// Analytic and simulated values disagree; the table is still written.
    CompareFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CompareFailed => 1,
            CliError::Malformed(_) => 2,
            CliError::Unstable(_) => 3,
        }
    }
}

impl From<psq::Error> for CliError {
    fn from(e: psq::Error) -> Self {
        match e {
            psq::Error::UnstableSystem { .. } | psq::Error::UnstableConfig { .. } => {
                CliError::Unstable(e.to_string())
            }
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PSQ_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Malformed(format!("PSQ_THREADS = {value:?} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Malformed(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::Sweep(a) => commands::sweep(&a, false),
        Command::Optimize(a) => commands::sweep(&a, true),
        Command::Simulate(a) => commands::simulate(&a, false),
        Command::Compare(a) => commands::simulate(&a, true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Malformed(msg) | CliError::Unstable(msg) => {
                    eprintln!("error: {}", msg.replace('\n', " "))
                }
                CliError::CompareFailed => {
                    eprintln!("error: simulation disagrees with the analytic value")
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
