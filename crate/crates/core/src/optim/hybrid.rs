use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{
    adamw_step, muon_step, AdamWConfig, MuonConfig, OptimError, ParamKind, ParamState,
    UpdateStats,
};
use crate::matrix::Matrix;

/// Muon for matrix parameters, AdamW for everything else.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HybridConfig {
    pub muon: MuonConfig,
    pub adamw: AdamWConfig,
    /// Parameters updated without weight decay.
    pub decay_exclude: Vec<String>,
}

impl HybridConfig {
    /// Both optimizers share one learning rate and decay ratio.
    pub fn shared(lr: f64, weight_decay: f64) -> Self {
        Self {
            muon: MuonConfig {
                lr,
                weight_decay,
                ..MuonConfig::default()
            },
            adamw: AdamWConfig {
                lr,
                weight_decay,
                ..AdamWConfig::default()
            },
            decay_exclude: Vec::new(),
        }
    }
}

/// Updates every parameter with the optimizer its kind routes to.
pub fn hybrid_step(
    params: &[ParamState],
    grads: &BTreeMap<String, Matrix>,
    cfg: &HybridConfig,
    step_lr: f64,
) -> Result<(Vec<ParamState>, Vec<UpdateStats>), OptimError> {
    let mut next = Vec::with_capacity(params.len());
    let mut stats = Vec::with_capacity(params.len());
    for p in params {
        let grad = grads
            .get(&p.name)
            .ok_or_else(|| OptimError::MissingGradient {
                name: p.name.clone(),
            })?;
        let exclude = cfg.decay_exclude.contains(&p.name);
        let (state, s) = match p.kind {
            ParamKind::MatrixParam => {
                let mut c = cfg.muon;
                if exclude {
                    c.weight_decay = 0.0;
                }
                muon_step(p, grad, &c, step_lr)?
            }
            ParamKind::VectorParam => {
                let mut c = cfg.adamw;
                if exclude {
                    c.weight_decay = 0.0;
                }
                adamw_step(p, grad, &c, step_lr)?
            }
        };
        next.push(state);
        stats.push(s);
    }
    Ok((next, stats))
}
