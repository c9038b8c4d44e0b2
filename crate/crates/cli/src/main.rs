//! `lagrisk`: batch driver for every pipeline stage.
//!
//! Machine-readable outputs always go to files; stdout gets a human summary.
//! Exit codes: 0 success, 1 gradient check failed, 2 input error,
//! 3 analytic degeneracy, 4 range error.

mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{ArgGroup, Parser, Subcommand};
use lagrisk_core::analytics::{DEFAULT_MAX_DELAY, DEFAULT_MIN_OVERLAP};
use lagrisk_core::ingest::DEFAULT_WINDOW_DAYS;
use lagrisk_core::{Error, ErrorClass};

#[derive(Debug, Parser)]
#[command(
    name = "lagrisk",
    version,
    about = "Lagged pollutant/case correlation, LSTM risk forecasting and what-if risk maps",
    after_help = "File formats (raster, cases, mask, bundle, report, samples, features, model, grid, \
                  scenario, risk map) are documented with versioned schemas in docs/schemas.md."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum GapFillArg {
    None,
    Linear,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum MapFormat {
    Json,
    Pgm,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a region bundle from rasters (JSON), daily cases (CSV) and a mask (JSON).
    Ingest {
        #[arg(long)]
        rasters: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
        window_days: usize,
        /// First day of bucket 0; defaults to the earliest observation.
        #[arg(long)]
        anchor: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = GapFillArg::None)]
        gap_fill: GapFillArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lagged PCC sweep over a bundle, or best delay from a PCC table (CSV `delay,<region>...`).
    #[command(group(ArgGroup::new("input").required(true).args(["bundle", "pcc_table"])))]
    Correlate {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        pcc_table: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_DELAY)]
        max_delay: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_OVERLAP)]
        min_overlap: usize,
        /// Bucket width used to convert delays to days in table mode.
        #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
        window_days: usize,
        /// Report JSON and per-delay scatter CSVs are written here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Training samples (pollutant features, logit risk targets) from a bundle.
    Labels {
        #[arg(long)]
        bundle: PathBuf,
        /// Label lead in buckets, normally the best delay from `correlate`.
        #[arg(long, default_value_t = 3)]
        lead: usize,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value = "no2")]
        source_label: String,
        #[arg(long)]
        out_samples: PathBuf,
        #[arg(long)]
        out_features: PathBuf,
    },
    /// Train an LSTM on a sample set; writes the model JSON and an `epoch,loss` CSV.
    Train {
        #[arg(long)]
        samples: PathBuf,
        /// TrainConfig JSON; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        gradient_clip: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        loss_out: PathBuf,
    },
    /// Risk maps from a model and a feature matrix, optionally under a scenario.
    #[command(visible_alias = "predict")]
    Riskmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// GridSpec JSON; without it the maps are a 1 x n_out strip.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value = "1970-01-01")]
        start_date: NaiveDate,
        #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
        step_days: usize,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Only this timestep; all timesteps when absent.
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, value_enum, default_value_t = MapFormat::Json)]
        format: MapFormat,
        #[arg(long, default_value_t = 0.33)]
        low: f64,
        #[arg(long, default_value_t = 0.66)]
        medium: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare backpropagated gradients with central differences on a random model.
    Gradcheck {
        #[arg(long, default_value_t = 3)]
        n_in: usize,
        #[arg(long, default_value_t = 4)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        n_out: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Debug aid: double one analytic gradient entry before comparing.
        #[arg(long)]
        corrupt_gradient: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "LAGRISK_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "LAGRISK_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long, env = "LAGRISK_MAX_UPLOAD_BYTES", default_value_t = 64 * 1024 * 1024)]
        max_upload_bytes: usize,
        #[arg(long, default_value_t = 0.33)]
        low: f64,
        #[arg(long, default_value_t = 0.66)]
        medium: f64,
    },
    /// Write a seeded demo dataset: rasters, cases, mask, plus a monotone model,
    /// baseline features and grid for risk-map experiments.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "lombardy")]
        region: String,
        #[arg(long, default_value = "2020-02-01")]
        start: NaiveDate,
        #[arg(long, default_value_t = 200)]
        days: usize,
        /// Case response lag in buckets.
        #[arg(long, default_value_t = 3)]
        lag: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Engine(Error),
    CheckFailed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Engine(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Engine(e) => match e.class() {
                ErrorClass::Input => 2,
                ErrorClass::Degenerate => 3,
                ErrorClass::Range => 4,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Engine(e) => write!(f, "{e}"),
            CliError::CheckFailed(m) => write!(f, "{m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
