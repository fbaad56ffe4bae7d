//! `ltcs`: data generation, training, evaluation, experiments, the Bayes
//! oracle and the serving simulator from one binary.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data
//! error, 4 numerical error, 5 protocol error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ltcs::{ErrorCategory, Execution, LtcsError, Precision};

#[derive(Debug, Parser)]
#[command(name = "ltcs", version, about = "Co-trained pointwise ranker and setwise re-ranker")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// Seed for the world, the model initialization and the shuffle order.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with optional [world], [model] and [train] tables, or a run manifest.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Primary output file; the manifest is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads (1 runs everything sequentially).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Floating-point width of the model.
    #[arg(long, global = true, value_parser = ["32", "64"])]
    pub precision: Option<String>,
    /// Architecture and training preset.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic comparison-shopping dataset.
    GenData {
        /// Write the held-out split of this many queries that follows the training queries.
        #[arg(long)]
        eval_split: Option<usize>,
        #[arg(long)]
        num_queries: Option<usize>,
    },
    /// Train a co-trained ranker and write a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Weight of the re-ranker loss, in [0, 1].
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Evaluate a checkpoint (end-to-end and initial-only NDCG).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset to score; defaults to the held-out split of the configured world.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        eval_queries: usize,
    },
    /// Train and evaluate over a grid of one hyperparameter and several seeds.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// top_k, encoder_layers or alpha.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Also train a pointwise-only reference per seed for the gain columns.
        #[arg(long)]
        baseline: bool,
    },
    /// Cross-seed spread of end-to-end NDCG per alpha.
    Stability {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0])]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Check the posterior factorization on the bundled discrete worlds.
    BayesCheck {
        /// Only this bundled world.
        #[arg(long)]
        world: Option<String>,
    },
    /// Serve a dataset through a simulated leaf/master cluster.
    ServeSim {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        eval_queries: usize,
        #[arg(long, default_value_t = 4)]
        shards: usize,
        /// Re-ranked set size; defaults to the checkpoint's.
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value = "fail", value_parser = ["fail", "degrade"])]
        failure_policy: String,
        /// Seed for a random candidate-to-leaf assignment (round-robin when absent).
        #[arg(long)]
        partition_seed: Option<u64>,
        /// Mark these leaves unavailable.
        #[arg(long, value_delimiter = ',')]
        down: Vec<usize>,
    },
}

/// Training and held-out data. Without files, both are generated from the
/// configured world.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Size of the generated held-out split.
    #[arg(long, default_value_t = 2000)]
    pub eval_queries: usize,
}

impl Common {
    pub fn precision(&self) -> Option<Precision> {
        self.precision.as_deref().and_then(|p| p.parse().ok()).and_then(Precision::from_bits)
    }

    /// Sizes the worker pool and returns the matching execution mode.
    pub fn execution(&self) -> ltcs::Result<Execution> {
        match self.jobs {
            Some(0) => Err(LtcsError::Config("--jobs must be >= 1".into())),
            Some(1) => Ok(Execution::Sequential),
            #[cfg(feature = "parallel")]
            Some(n) => {
                // Fails only if a pool already exists, which never happens in a one-shot CLI.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                Ok(Execution::Parallel)
            }
            #[cfg(not(feature = "parallel"))]
            Some(_) => Ok(Execution::Sequential),
            None => Ok(Execution::default().effective()),
        }
    }
}

fn exit_code(e: &LtcsError) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
        ErrorCategory::Protocol => 5,
        ErrorCategory::Other => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
