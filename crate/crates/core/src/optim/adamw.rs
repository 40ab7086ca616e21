
use super::{Buffers, OptimError, ParamState, UpdateStats};
use crate::matrix::Matrix;
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

/// AdamW hyper-parameters. Defaults are the usual LLM-training values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.95,
            epsilon: 1e-8,
            weight_decay: 0.1,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(OptimError::InvalidConfig("adamw lr must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::InvalidConfig("adamw betas must lie in [0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(OptimError::InvalidConfig("adamw epsilon must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(OptimError::InvalidConfig("adamw weight_decay must be >= 0"));
        }
        Ok(())
    }
}

/// Bias-corrected AdamW on flat slices; `step` is the 1-based count after
/// this update. Writes the raw update (before lr) into `update`.
#[allow(clippy::too_many_arguments)]
pub fn adamw_elementwise(
    weight: &mut [f64],
    first: &mut [f64],
    second: &mut [f64],
    grad: &[f64],
    update: &mut [f64],
    step: u64,
    cfg: &AdamWConfig,
    step_lr: f64,
) {
    let t = step.min(i32::MAX as u64) as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..weight.len() {
        let g = grad[i];
        first[i] = cfg.beta1 * first[i] + (1.0 - cfg.beta1) * g;
        second[i] = cfg.beta2 * second[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = first[i] / bc1;
        let v_hat = second[i] / bc2;
        let u = m_hat / (v_hat.sqrt() + cfg.epsilon);
        update[i] = u;
        weight[i] -= step_lr * (u + cfg.weight_decay * weight[i]);
    }
}

/// One AdamW step with decoupled weight decay.
pub fn adamw_step(
    state: &ParamState,
    grad: &Matrix,
    cfg: &AdamWConfig,
    step_lr: f64,
) -> Result<(ParamState, UpdateStats), OptimError> {
    state.check_grad(grad)?;
    let Buffers::AdamW {
        first_moment,
        second_moment,
        step,
    } = &state.buffers
    else {
        return Err(OptimError::BufferMismatch {
            name: state.name.clone(),
            expected: "AdamW",
            found: state.buffers.label(),
        });
    };
    let (rows, cols) = grad.shape();
    let step = step + 1;
    let mut weight = state.weight.clone().into_data();
    let mut first = first_moment.clone().into_data();
    let mut second = second_moment.clone().into_data();
    let mut update = alloc::vec![0.0; weight.len()];
    adamw_elementwise(
        &mut weight,
        &mut first,
        &mut second,
        grad.data(),
        &mut update,
        step,
        cfg,
        step_lr,
    );
    let weight = Matrix::from_raw(rows, cols, weight);
    let stats = UpdateStats {
        update_rms: Matrix::from_raw(rows, cols, update).rms(),
        weight_rms: weight.rms(),
    };
    Ok((
        ParamState {
            name: state.name.clone(),
            weight,
            buffers: Buffers::AdamW {
                first_moment: Matrix::from_raw(rows, cols, first),
                second_moment: Matrix::from_raw(rows, cols, second),
                step,
            },
            kind: state.kind,
        },
        stats,
    ))
}
