mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mftlab_core::flows::FlowKind;

#[derive(Parser)]
#[command(name = "mftlab", version, about = "Fluctuation and structure checks for the zero-range process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and print its stationary weights and spectral gap.
    Validate { config: PathBuf },
    /// Integrate the full, symmetric or antisymmetric flow.
    Flow(FlowArgs),
    /// Force split, quasipotential and structure residuals as JSON.
    MftReport(ReportArgs),
    /// K and M mobilities, contracted quasi-GENERIC checks and the M-structure diagnostic.
    Quadratise(QuadratiseArgs),
    /// Verification of the three-node model with a circulating drift.
    DriftDemo(DriftArgs),
    /// Stochastic particle simulation with trajectory export.
    Simulate(SimArgs),
    /// Time averages of simulated densities against the stationary density.
    Ergodic(SimArgs),
}

#[derive(Args)]
struct FlowArgs {
    config: PathBuf,
    #[arg(long, default_value = "full")]
    kind: FlowKind,
    /// Initial density, comma separated; defaults to the uniform density.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho0: Option<Vec<f64>>,
    #[arg(long = "T", default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    config: PathBuf,
    /// Evaluate at one density, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "sweep")]
    rho: Option<Vec<f64>>,
    /// Evaluate on this many quasi-random interior densities.
    #[arg(long)]
    sweep: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QuadratiseArgs {
    config: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "sweep")]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    sweep: Option<usize>,
    /// Empty node X into node Y and record the M-structure diagnostic.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    degeneration: Option<Vec<usize>>,
    /// CSV destination for the degeneration series.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DriftArgs {
    config: PathBuf,
    /// Drift strength; overrides the config's drift section.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    config: PathBuf,
    /// Number of particles.
    #[arg(long)]
    n: u64,
    #[arg(long = "T")]
    t_end: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    /// Initial density, rounded to counts; defaults to the stationary density.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho0: Option<Vec<f64>>,
    /// Output directory for `simulate`, report file for `ergodic`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything that ends a run early, keyed to an exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Core(mftlab_core::Error),
    /// Checks ran but did not all pass.
    Verification(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use mftlab_core::Error as E;
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(E::InvalidInput(_) | E::Unsupported(_)) => 1,
            Failure::Core(E::ModelInvalid(_)) => 2,
            Failure::Core(_) | Failure::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "{e:#}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Verification(s) => write!(f, "verification failed: {s}"),
        }
    }
}

impl From<mftlab_core::Error> for Failure {
    fn from(e: mftlab_core::Error) -> Self {
        Failure::Core(e)
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("MFTLAB_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("MFTLAB_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| Failure::Usage(anyhow::anyhow!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Validate { config } => commands::validate(&config),
        Command::Flow(a) => commands::flow(a),
        Command::MftReport(a) => commands::mft_report(a),
        Command::Quadratise(a) => commands::quadratise(a),
        Command::DriftDemo(a) => commands::drift_demo(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Ergodic(a) => commands::ergodic(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
