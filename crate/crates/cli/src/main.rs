mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;
use pfit::placement::{Mode, Solver};

/// Invalid or inconsistent run configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser)]
#[command(name = "pfit", version, about = "Transfer operators, information transfer and placement on grid partitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the transition matrix and write matrix.csv + matrix.meta.json.
    Build(BuildArgs),
    /// Set-to-set transfer report, or the full cell-to-cell transfer matrix.
    Transfer(TransferArgs),
    /// Ergodicity and mixing verdicts.
    Classify(ClassifyArgs),
    /// Actuator or sensor placement plus a coverage heatmap.
    Place(PlaceArgs),
    /// Discounted reachability vector of a set of actuator cells.
    Controllability(ControllabilityArgs),
    /// Describe the configured system and partition, or a saved matrix.
    Info(InfoArgs),
}

#[derive(Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub ov: Overrides,
}

#[derive(Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub ov: Overrides,
    /// Load the transition matrix instead of building it.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Source cells, comma separated.
    #[arg(long, value_delimiter = ',', requires = "target")]
    pub source: Option<Vec<usize>>,
    /// Target cells, comma separated.
    #[arg(long, value_delimiter = ',', requires = "source")]
    pub target: Option<Vec<usize>>,
}

#[derive(Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub ov: Overrides,
    /// Load the transition matrix instead of building it.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Mixing-test horizon (defaults to the transfer horizon).
    #[arg(long)]
    pub mixing_n_max: Option<usize>,
    /// Mixing-test tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Test every ordered pair of cells (small grids only).
    #[arg(long)]
    pub all_pairs: bool,
}

#[derive(Args)]
pub struct PlaceArgs {
    #[command(flatten)]
    pub ov: Overrides,
    /// Load the transition matrix instead of building it.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Load a saved transfer matrix instead of computing it.
    #[arg(long)]
    pub transfer_matrix: Option<PathBuf>,
    /// Also write the computed transfer matrix to the output directory.
    #[arg(long)]
    pub save_transfer: bool,
    /// Number of actuators or sensors.
    #[arg(long)]
    pub count: Option<usize>,
    /// actuator or sensor.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// exact, greedy or lp-rounded.
    #[arg(long)]
    pub solver: Option<Solver>,
    /// Smallest transfer (nats) that counts as covered.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Admissible cells, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub admissible: Option<Vec<usize>>,
    /// Search for the smallest full cover of up to this many cells.
    #[arg(long)]
    pub full_cover_max: Option<usize>,
}

#[derive(Args)]
pub struct ControllabilityArgs {
    #[command(flatten)]
    pub ov: Overrides,
    /// Load the transition matrix instead of building it.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Actuator cells, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "from_placement")]
    pub actuators: Option<Vec<usize>>,
    /// Take the actuator cells from a placement.json.
    #[arg(long)]
    pub from_placement: Option<PathBuf>,
    /// Discount factor in (0, 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Entries must exceed this value for the controllability flag.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
}

#[derive(Args)]
pub struct InfoArgs {
    #[command(flatten)]
    pub ov: Overrides,
    /// Summarize a saved matrix instead.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "actuator" => Ok(Mode::Actuator),
        "sensor" => Ok(Mode::Sensor),
        _ => Err(format!("unknown mode `{s}` (expected actuator or sensor)")),
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("PFIT_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| ConfigError::new(format!("PFIT_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<ConfigError>() || e.is::<clap::Error>()) {
        return 2;
    }
    match err.chain().find_map(|e| e.downcast_ref::<pfit::Error>()) {
        Some(pfit::Error::InstanceTooLarge { .. }) => 3,
        Some(
            pfit::Error::UnknownSystem(_)
            | pfit::Error::InvalidParameter(_)
            | pfit::Error::MalformedField(_)
            | pfit::Error::ZeroDimension { .. }
            | pfit::Error::InvalidSampleCount { .. }
            | pfit::Error::DimensionMismatch { .. }
            | pfit::Error::IndexOutOfRange { .. }
            | pfit::Error::InvalidProblem(_)
            | pfit::Error::NotNormalized { .. }
            | pfit::Error::NegativeEntry { .. }
            | pfit::Error::Format { .. }
            | pfit::Error::Csv(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Build(a) => commands::build(&a),
        Command::Transfer(a) => commands::transfer(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Place(a) => commands::place(&a),
        Command::Controllability(a) => commands::controllability(&a),
        Command::Info(a) => commands::info(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
