//! Muon, AdamW and the hybrid router that combines them.
//!
//! Optimizer steps are pure: they take a [`ParamState`] by reference and
//! return the updated state together with [`UpdateStats`] for logging.
//! Weight decay is decoupled for both optimizers:
//!
//! ```text
//! W ← W − η·(update + λ·W)
//! ```

mod adamw;
mod hybrid;
mod muon;

use alloc::string::String;

use thiserror::Error;

use crate::matrix::{Matrix, MatrixError};
use crate::newton_schulz::NsError;

pub use adamw::{adamw_elementwise, adamw_step, AdamWConfig};
pub use hybrid::{hybrid_step, HybridConfig};
pub use muon::{
    apply_decoupled_update, momentum_update, muon_step, muon_step_with, nesterov_input,
    scale_update, MuonConfig, NewtonSchulzBackend, Orthogonalize, ScalingMode, ScalingVariant,
    SvdPolarBackend,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("parameter `{name}`: gradient shape {found:?} does not match weight shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("parameter `{name}`: gradient contains non-finite entries")]
    NonFiniteGradient { name: String },
    #[error("parameter `{name}`: Muon only updates matrix parameters")]
    NotAMatrixParam { name: String },
    #[error("parameter `{name}`: optimizer buffers belong to {found}, expected {expected}")]
    BufferMismatch {
        name: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("no gradient supplied for parameter `{name}`")]
    MissingGradient { name: String },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("orthogonalization failed: {0}")]
    Orthogonalize(#[from] NsError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Routing tag: matrices go to Muon, vectors (gains, biases) to AdamW.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    MatrixParam,
    VectorParam,
}

/// Optimizer-owned buffers of one parameter, shaped like its weight.
#[derive(Debug, Clone, PartialEq)]
pub enum Buffers {
    Muon {
        momentum: Matrix,
    },
    AdamW {
        first_moment: Matrix,
        second_moment: Matrix,
        step: u64,
    },
}

impl Buffers {
    fn label(&self) -> &'static str {
        match self {
            Buffers::Muon { .. } => "Muon",
            Buffers::AdamW { .. } => "AdamW",
        }
    }

    /// Number of scalars held by the optimizer for this parameter.
    pub fn state_elements(&self) -> usize {
        match self {
            Buffers::Muon { momentum } => momentum.len(),
            Buffers::AdamW {
                first_moment,
                second_moment,
                ..
            } => first_moment.len() + second_moment.len(),
        }
    }
}

/// A trainable matrix plus its optimizer buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub name: String,
    pub weight: Matrix,
    pub buffers: Buffers,
    pub kind: ParamKind,
}

impl ParamState {
    /// Buffers follow the default routing: Muon for matrices, AdamW for
    /// vectors.
    pub fn new(name: impl Into<String>, weight: Matrix, kind: ParamKind) -> Self {
        match kind {
            ParamKind::MatrixParam => Self::for_muon(name, weight),
            ParamKind::VectorParam => Self::for_adamw(name, weight, kind),
        }
    }

    pub fn for_muon(name: impl Into<String>, weight: Matrix) -> Self {
        let (r, c) = weight.shape();
        Self {
            name: name.into(),
            weight,
            buffers: Buffers::Muon {
                momentum: Matrix::zeros(r, c),
            },
            kind: ParamKind::MatrixParam,
        }
    }

    pub fn for_adamw(name: impl Into<String>, weight: Matrix, kind: ParamKind) -> Self {
        let (r, c) = weight.shape();
        Self {
            name: name.into(),
            weight,
            buffers: Buffers::AdamW {
                first_moment: Matrix::zeros(r, c),
                second_moment: Matrix::zeros(r, c),
                step: 0,
            },
            kind,
        }
    }

    pub(crate) fn check_grad(&self, grad: &Matrix) -> Result<(), OptimError> {
        if grad.shape() != self.weight.shape() {
            return Err(OptimError::ShapeMismatch {
                name: self.name.clone(),
                expected: self.weight.shape(),
                found: grad.shape(),
            });
        }
        if !grad.is_finite() {
            return Err(OptimError::NonFiniteGradient {
                name: self.name.clone(),
            });
        }
        Ok(())
    }
}

/// Per-step diagnostics: RMS of the applied update (before the learning
/// rate) and of the weight after the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub update_rms: f64,
    pub weight_rms: f64,
}

#[cfg(test)]
mod tests;
