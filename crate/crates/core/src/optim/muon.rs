
use super::{Buffers, OptimError, ParamKind, ParamState, UpdateStats};
use crate::matrix::Matrix;
use crate::newton_schulz::{newton_schulz, NsConfig};
use crate::svd::svd;
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

/// Source of the orthogonalized update.
///
/// Production uses [`NewtonSchulzBackend`]; [`SvdPolarBackend`] computes the
/// exact polar factor and exists so tests can check the RMS laws exactly.
pub trait Orthogonalize {
    fn orthogonalize(&self, m: &Matrix) -> Result<Matrix, OptimError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NewtonSchulzBackend(pub NsConfig);

impl Orthogonalize for NewtonSchulzBackend {
    fn orthogonalize(&self, m: &Matrix) -> Result<Matrix, OptimError> {
        Ok(newton_schulz(m, &self.0)?)
    }
}

/// `U·Vᵀ` from an exact SVD. Zero input maps to zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct SvdPolarBackend;

impl Orthogonalize for SvdPolarBackend {
    fn orthogonalize(&self, m: &Matrix) -> Result<Matrix, OptimError> {
        if m.is_zero() {
            return Ok(m.clone());
        }
        let s = svd(m)?;
        // Drop numerically-null directions so rank-deficient inputs keep
        // their rank, matching what the Newton-Schulz limit would do.
        let keep = s.rank(1e-12);
        let u = s.u.leading_columns(keep);
        let vt = s.vt.leading_rows(keep);
        Ok(u.matmul(&vt)?)
    }
}

/// How the orthogonalized matrix is rescaled before it is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingVariant {
    /// `target·√H·O` with a model-wide hidden size `H`.
    BaselineSqrtH { hidden: usize },
    /// `target·O/RMS(O)`; the update RMS is exactly the target.
    UpdateNorm,
    /// `target·√max(A, B)·O` for an `A×B` parameter.
    AdjustedLr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingMode {
    pub variant: ScalingVariant,
    pub rms_target: f64,
}

impl ScalingMode {
    pub const DEFAULT_RMS_TARGET: f64 = 0.2;

    pub fn new(variant: ScalingVariant) -> Self {
        Self {
            variant,
            rms_target: Self::DEFAULT_RMS_TARGET,
        }
    }

    pub fn adjusted_lr() -> Self {
        Self::new(ScalingVariant::AdjustedLr)
    }

    pub fn update_norm() -> Self {
        Self::new(ScalingVariant::UpdateNorm)
    }

    pub fn baseline(hidden: usize) -> Self {
        Self::new(ScalingVariant::BaselineSqrtH { hidden })
    }
}

impl Default for ScalingMode {
    fn default() -> Self {
        Self::adjusted_lr()
    }
}

/// Rescales an orthogonalized update according to `mode`. The parameter
/// shape is taken from `o`.
pub fn scale_update(o: &Matrix, mode: &ScalingMode) -> Matrix {
    let target = mode.rms_target;
    match mode.variant {
        ScalingVariant::BaselineSqrtH { hidden } => o.scale(target * (hidden as f64).sqrt()),
        ScalingVariant::UpdateNorm => {
            let rms = o.rms();
            if rms == 0.0 {
                o.clone()
            } else {
                o.scale(target / rms)
            }
        }
        ScalingVariant::AdjustedLr => {
            let side = o.rows().max(o.cols()) as f64;
            o.scale(target * side.sqrt())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuonConfig {
    /// Base learning rate η; schedules scale it into the per-step rate.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub ns: NsConfig,
    pub nesterov: bool,
    pub scaling: ScalingMode,
}

impl Default for MuonConfig {
    fn default() -> Self {
        Self {
            lr: 2e-2,
            momentum: 0.95,
            weight_decay: 0.1,
            ns: NsConfig::default(),
            nesterov: true,
            scaling: ScalingMode::default(),
        }
    }
}

impl MuonConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(OptimError::InvalidConfig("muon lr must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OptimError::InvalidConfig("muon momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(OptimError::InvalidConfig("muon weight_decay must be >= 0"));
        }
        if !(self.scaling.rms_target.is_finite() && self.scaling.rms_target > 0.0) {
            return Err(OptimError::InvalidConfig("rms_target must be positive"));
        }
        if let ScalingVariant::BaselineSqrtH { hidden: 0 } = self.scaling.variant {
            return Err(OptimError::InvalidConfig("baseline hidden size must be positive"));
        }
        self.ns.validate()?;
        Ok(())
    }
}

/// `M ← μ·M + G`, elementwise in place.
#[inline]
pub fn momentum_update(momentum: &mut [f64], grad: &[f64], mu: f64) {
    for (m, &g) in momentum.iter_mut().zip(grad) {
        *m = mu * *m + g;
    }
}

/// Nesterov look-ahead `μ·M + G` using the already-updated momentum.
#[inline]
pub fn nesterov_input(momentum: &[f64], grad: &[f64], mu: f64) -> alloc::vec::Vec<f64> {
    momentum.iter().zip(grad).map(|(&m, &g)| mu * m + g).collect()
}

/// `W ← W − η·(U + λ·W)`, elementwise in place.
#[inline]
pub fn apply_decoupled_update(weight: &mut [f64], update: &[f64], lr: f64, weight_decay: f64) {
    for (w, &u) in weight.iter_mut().zip(update) {
        *w -= lr * (u + weight_decay * *w);
    }
}

/// One Muon step with Newton-Schulz orthogonalization.
pub fn muon_step(
    state: &ParamState,
    grad: &Matrix,
    cfg: &MuonConfig,
    step_lr: f64,
) -> Result<(ParamState, UpdateStats), OptimError> {
    muon_step_with(state, grad, cfg, step_lr, &NewtonSchulzBackend(cfg.ns))
}

/// One Muon step with an explicit orthogonalization backend.
pub fn muon_step_with(
    state: &ParamState,
    grad: &Matrix,
    cfg: &MuonConfig,
    step_lr: f64,
    backend: &dyn Orthogonalize,
) -> Result<(ParamState, UpdateStats), OptimError> {
    if state.kind != ParamKind::MatrixParam {
        return Err(OptimError::NotAMatrixParam {
            name: state.name.clone(),
        });
    }
    state.check_grad(grad)?;
    let Buffers::Muon { momentum } = &state.buffers else {
        return Err(OptimError::BufferMismatch {
            name: state.name.clone(),
            expected: "Muon",
            found: state.buffers.label(),
        });
    };
    let (rows, cols) = grad.shape();

    let mut momentum = momentum.clone().into_data();
    momentum_update(&mut momentum, grad.data(), cfg.momentum);
    let input = if cfg.nesterov {
        nesterov_input(&momentum, grad.data(), cfg.momentum)
    } else {
        momentum.clone()
    };
    let ortho = backend.orthogonalize(&Matrix::from_raw(rows, cols, input))?;
    let update = scale_update(&ortho, &cfg.scaling);

    let mut weight = state.weight.clone().into_data();
    apply_decoupled_update(&mut weight, update.data(), step_lr, cfg.weight_decay);
    let weight = Matrix::from_raw(rows, cols, weight);

    let stats = UpdateStats {
        update_rms: update.rms(),
        weight_rms: weight.rms(),
    };
    Ok((
        ParamState {
            name: state.name.clone(),
            weight,
            buffers: Buffers::Muon {
                momentum: Matrix::from_raw(rows, cols, momentum),
            },
            kind: state.kind,
        },
        stats,
    ))
}
