mod commands;
mod report;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::Format;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] linenet::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 validation, 3 computation failure, 4 size cap.
    pub fn exit_code(&self) -> u8 {
        use linenet::Error::*;
        match self {
            CliError::Core(CapacityExceeded { .. }) => 4,
            CliError::Core(InvalidSpec(_) | InvalidState(_) | StepTooCoarse(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::Json(_) | CliError::Usage(_) => 2,
            CliError::Csv(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "linenet", version, about = "Capacity, delay and coding analysis of finite-buffer line networks")]
pub struct Cli {
    /// Network JSON file, or inline JSON such as '{"eps":[0.5,0.5],"buffers":[2]}'.
    #[arg(long, global = true)]
    pub spec: Option<String>,
    /// Solver tolerance (command-specific default).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub epochs: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file (a directory for `reproduce`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Estimate {
    Rbie,
    Dbie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionArg {
    Double,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    MaxThroughput,
    MinDelay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Auto,
    Exhaustive,
    Neighborhood,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact capacity from the full occupancy chain.
    Exact {
        #[arg(long = "state-cap")]
        state_cap: Option<usize>,
        /// Also write the transition matrix as 0-based (row, col, prob) CSV.
        #[arg(long = "matrix-out")]
        matrix_out: Option<PathBuf>,
    },
    /// Lower and upper capacity bounds next to the exact value.
    Bounds {
        #[arg(long = "state-cap")]
        state_cap: Option<usize>,
    },
    /// Rate-based iterative estimate.
    Rbie,
    /// Distribution-based iterative estimate.
    Dbie {
        #[arg(long, value_enum, default_value_t = PrecisionArg::Extended)]
        precision: PrecisionArg,
        /// Reject coinciding erasure probabilities instead of separating them.
        #[arg(long = "no-perturb")]
        no_perturb: bool,
    },
    /// FCFS delay profile from an iterative estimate.
    Delay {
        #[arg(long, value_enum, default_value_t = Estimate::Dbie)]
        estimate: Estimate,
        /// Add the head-of-line wait at the source.
        #[arg(long = "include-source")]
        include_source: bool,
    },
    /// Monte-Carlo run of the feedback network.
    Simulate {
        #[arg(long)]
        warmup: Option<u64>,
        /// Track FCFS packet delays.
        #[arg(long)]
        delay: bool,
        /// Independent trials on consecutive streams.
        #[arg(long, default_value_t = 1)]
        trials: u64,
    },
    /// Feedback-free network with random linear coding.
    Netcod {
        /// Field sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 16, 256, 65536])]
        q: Vec<u32>,
        #[arg(long)]
        warmup: Option<u64>,
        /// Also compare occupancy transitions with the feedback chain.
        #[arg(long)]
        transitions: bool,
    },
    /// Continuous-time network through its slotted equivalent.
    Continuous {
        /// Service rates (1/s), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        buffers: Vec<u32>,
        /// Step in seconds; several values give a sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [0.001])]
        tau: Vec<f64>,
    },
    /// Buffer allocation under a memory budget.
    Allocate {
        /// Erasure probabilities; taken from --spec when absent.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        budget: u32,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::MaxThroughput)]
        objective: ObjectiveArg,
        /// Throughput floor for min-delay.
        #[arg(long)]
        floor: Option<f64>,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
    },
    /// Write plot-ready CSV datasets.
    Reproduce {
        /// One of the catalogue ids, or `all`.
        figure: String,
        #[arg(long = "state-cap", default_value_t = reproduce::DEFAULT_STATE_CAP)]
        state_cap: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
