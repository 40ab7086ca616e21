//! Desk-scale training harness: gained MLPs on synthetic tasks, trained
//! with Muon, AdamW or the hybrid, with per-step metric logging.

mod metrics;
mod model;
mod schedule;
mod task;
mod train;

use thiserror::Error;

use crate::matrix::MatrixError;
use crate::optim::OptimError;

pub use metrics::{MetricsLog, ParamMetrics, StepRecord, CSV_HEADER};
pub use model::{
    forward_backward, gain_name, weight_name, Architecture, Layer, LossKind, Nonlinearity,
    ToyModel,
};
pub use schedule::{DecayShape, Schedule};
pub use task::{generate, Dataset, TaskKind, TaskSpec, VALIDATION_FRACTION};
pub use train::{
    ablation_weight_decay, compare_optimizers, plateau_step, train, AblationReport,
    ExperimentConfig, OptimizerChoice, TrainConfig, TrainOutcome, DIVERGENCE_LOSS,
    PLATEAU_FRACTION,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("{what} has {found} columns, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("architecture needs at least two positive widths")]
    InvalidArchitecture,
    #[error("dataset of {0} examples is too small to split")]
    DatasetTooSmall(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("log step {found} does not follow step {previous}")]
    NonIncreasingStep { previous: usize, found: usize },
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}
