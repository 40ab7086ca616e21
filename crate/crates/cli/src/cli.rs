use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{OptimSettings, OptimizerArg, TrainSettings};

#[derive(Debug, Parser)]
#[command(name = "muon", about = "Muon optimizer toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Decimal places for numbers in output files; shortest round-trip
    /// formatting when omitted.
    #[arg(long, global = true)]
    pub precision: Option<usize>,
    /// TOML file with `seed`, `out_dir`, `precision` and `[optimizer]` /
    /// `[train]` tables. Flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// Quintic Newton-Schulz iteration.
    Ns,
    /// Exact polar factor from the SVD.
    Svd,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Orthogonalize a matrix read from CSV.
    Orthogonalize {
        /// Headerless numeric CSV, one matrix row per line.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; defaults to `<out-dir>/orthogonalized.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ns")]
        backend: Backend,
        /// Newton-Schulz iterations.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train the toy network and write per-step metrics.
    Train {
        #[command(flatten)]
        optim: OptimSettings,
        #[command(flatten)]
        train: TrainSettings,
    },
    /// Paired Muon runs that differ only in weight decay.
    AblateWd {
        /// The two weight decays to compare.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1])]
        decays: Vec<f64>,
        #[command(flatten)]
        optim: OptimSettings,
        #[command(flatten)]
        train: TrainSettings,
    },
    /// Compare Distributed Muon against a single device and report traffic.
    DistCheck {
        /// Data-parallel group size.
        #[arg(long, default_value_t = 4)]
        dp: usize,
        /// Parameter shape as `ROWSxCOLS`.
        #[arg(long, default_value = "32x48")]
        shape: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[command(flatten)]
        optim: OptimSettings,
    },
    /// SVD entropy and normalized spectra of a checkpoint directory.
    Entropy {
        /// Directory of `<param>.csv` matrices.
        #[arg(long)]
        checkpoint: PathBuf,
        /// TOML table mapping parameter names to group names. Every
        /// parameter is its own group when omitted.
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Fit `y = A·c^α` to a two-column CSV with a header row.
    FitScaling {
        #[arg(long)]
        input: PathBuf,
    },
    /// Monte Carlo estimate of the MoE gate scaling factor.
    GateFactor {
        #[arg(long)]
        experts: usize,
        #[arg(long)]
        topk: usize,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
    },
    /// Train the same model with several optimizers. Report only.
    CompareOptimizers {
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [OptimizerArg::Muon, OptimizerArg::Adamw, OptimizerArg::Hybrid])]
        optimizers: Vec<OptimizerArg>,
        #[command(flatten)]
        optim: OptimSettings,
        #[command(flatten)]
        train: TrainSettings,
    },
}
