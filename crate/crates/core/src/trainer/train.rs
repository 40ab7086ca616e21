use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::metrics::{MetricsLog, ParamMetrics, StepRecord};
use super::model::{forward_backward, Architecture, ToyModel};
use super::schedule::Schedule;
use super::task::{generate, select_rows, Dataset, TaskSpec};
use super::TrainError;
use crate::optim::{
    adamw_step, muon_step, AdamWConfig, HybridConfig, MuonConfig, ParamKind, ParamState,
    UpdateStats,
};
use crate::random::seeded_rng;

/// Runs whose training loss exceeds this are treated as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerChoice {
    /// Muon on weight matrices; gains stay frozen.
    Muon(MuonConfig),
    /// AdamW on every parameter.
    AdamW(AdamWConfig),
    /// Muon on weight matrices, AdamW on gains.
    Hybrid(HybridConfig),
}

impl OptimizerChoice {
    fn base_lr(&self) -> f64 {
        match self {
            OptimizerChoice::Muon(c) => c.lr,
            OptimizerChoice::AdamW(c) => c.lr,
            OptimizerChoice::Hybrid(c) => c.muon.lr,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        match self {
            OptimizerChoice::Muon(c) => c.validate()?,
            OptimizerChoice::AdamW(c) => c.validate()?,
            OptimizerChoice::Hybrid(c) => {
                c.muon.validate()?;
                c.adamw.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerChoice,
    pub schedule: Schedule,
    pub steps: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Drives mini-batch shuffling only.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: MetricsLog,
    pub model: ToyModel,
}

fn initial_states(model: &ToyModel, choice: &OptimizerChoice) -> Vec<ParamState> {
    model
        .params()
        .into_iter()
        .map(|(name, w, kind)| match choice {
            OptimizerChoice::AdamW(_) => ParamState::for_adamw(name, w.clone(), kind),
            _ => ParamState::new(name, w.clone(), kind),
        })
        .collect()
}

fn step_param(
    state: &ParamState,
    grad: &crate::matrix::Matrix,
    choice: &OptimizerChoice,
    factor: f64,
) -> Result<(ParamState, UpdateStats), TrainError> {
    let out = match (choice, state.kind) {
        (OptimizerChoice::Muon(_), ParamKind::VectorParam) => {
            let stats = UpdateStats {
                update_rms: 0.0,
                weight_rms: state.weight.rms(),
            };
            (state.clone(), stats)
        }
        (OptimizerChoice::Muon(c), ParamKind::MatrixParam) => muon_step(state, grad, c, c.lr * factor)?,
        (OptimizerChoice::AdamW(c), _) => adamw_step(state, grad, c, c.lr * factor)?,
        (OptimizerChoice::Hybrid(h), kind) => {
            let excluded = h.decay_exclude.contains(&state.name);
            if kind == ParamKind::MatrixParam {
                let mut c = h.muon;
                if excluded {
                    c.weight_decay = 0.0;
                }
                muon_step(state, grad, &c, c.lr * factor)?
            } else {
                let mut c = h.adamw;
                if excluded {
                    c.weight_decay = 0.0;
                }
                adamw_step(state, grad, &c, c.lr * factor)?
            }
        }
    };
    Ok(out)
}

/// Trains a copy of `model` on `data`.
pub fn train(model: &ToyModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.optimizer.validate()?;
    let n = data.train_x.rows();
    let batch = cfg.batch_size.map_or(n, |b| b.min(n));
    if batch == 0 {
        return Err(TrainError::InvalidConfig("batch size must be positive"));
    }
    let mut model = model.clone();
    let mut states = initial_states(&model, &cfg.optimizer);
    let mut log = MetricsLog::new();
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    for step in 0..cfg.steps {
        let (x, y) = if batch == n {
            (data.train_x.clone(), data.train_y.clone())
        } else {
            if cursor + batch > n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let idx = &order[cursor..cursor + batch];
            cursor += batch;
            (select_rows(&data.train_x, idx), select_rows(&data.train_y, idx))
        };
        let (train_loss, grads) = forward_backward(&model, &x, &y, data.loss)?;
        if !train_loss.is_finite() || train_loss > DIVERGENCE_LOSS {
            return Err(TrainError::Diverged { step, loss: train_loss });
        }
        let val_loss = model.loss(&data.val_x, &data.val_y, data.loss)?;
        let factor = cfg.schedule.factor(step, cfg.steps);

        let mut params = Vec::with_capacity(states.len());
        for state in &mut states {
            let grad = &grads[&state.name];
            let (next, stats) = step_param(state, grad, &cfg.optimizer, factor)?;
            *model
                .param_mut(&next.name)
                .expect("states mirror model params") = next.weight.clone();
            params.push(ParamMetrics {
                name: next.name.clone(),
                kind: next.kind,
                stats,
            });
            *state = next;
        }
        log.push(StepRecord {
            step,
            train_loss,
            val_loss,
            lr: cfg.optimizer.base_lr() * factor,
            params,
        })?;
    }
    Ok(TrainOutcome { log, model })
}

/// First step whose loss has covered `fraction` of the total drop from the
/// first loss to the minimum. `None` when the loss never decreased.
pub fn plateau_step(losses: &[f64], fraction: f64) -> Option<usize> {
    let first = *losses.first()?;
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    if min.partial_cmp(&first) != Some(core::cmp::Ordering::Less) {
        return None;
    }
    let threshold = first - fraction * (first - min);
    losses.iter().position(|&l| l <= threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub arch: Architecture,
    pub task: TaskSpec,
    pub model_seed: u64,
    pub schedule: Schedule,
    pub steps: usize,
    pub batch_size: Option<usize>,
}

impl ExperimentConfig {
    fn run(&self, optimizer: OptimizerChoice) -> Result<TrainOutcome, TrainError> {
        let data = generate(&self.task, &self.arch)?;
        let model = ToyModel::init(&self.arch, &mut seeded_rng(self.model_seed))?;
        train(
            &model,
            &data,
            &TrainConfig {
                optimizer,
                schedule: self.schedule,
                steps: self.steps,
                batch_size: self.batch_size,
                seed: self.model_seed,
            },
        )
    }
}

/// Paired Muon runs differing only in weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub weight_decays: [f64; 2],
    pub logs: [MetricsLog; 2],
    /// Plateau of the first run's training loss (95% of its total drop).
    pub plateau_step: Option<usize>,
    /// Steps run divided by the plateau step.
    pub overtrain_ratio: f64,
    /// Largest weight-matrix RMS after the final step.
    pub terminal_max_weight_rms: [f64; 2],
    pub final_val_loss: [f64; 2],
}

pub const PLATEAU_FRACTION: f64 = 0.95;

/// Trains the same model and data twice with Muon, once per weight decay.
pub fn ablation_weight_decay(
    exp: &ExperimentConfig,
    muon: &MuonConfig,
    weight_decays: [f64; 2],
) -> Result<AblationReport, TrainError> {
    let run = |wd: f64| {
        exp.run(OptimizerChoice::Muon(MuonConfig {
            weight_decay: wd,
            ..*muon
        }))
    };
    let logs = [run(weight_decays[0])?.log, run(weight_decays[1])?.log];
    let plateau = plateau_step(&logs[0].train_losses(), PLATEAU_FRACTION);
    let terminal = |l: &MetricsLog| l.last().map_or(0.0, |r| r.max_weight_rms(ParamKind::MatrixParam));
    let val = |l: &MetricsLog| l.last().map_or(f64::NAN, |r| r.val_loss);
    Ok(AblationReport {
        weight_decays,
        plateau_step: plateau,
        overtrain_ratio: exp.steps as f64 / plateau.unwrap_or(0).max(1) as f64,
        terminal_max_weight_rms: [terminal(&logs[0]), terminal(&logs[1])],
        final_val_loss: [val(&logs[0]), val(&logs[1])],
        logs,
    })
}

/// Same model, data and schedule under each optimizer. Report only.
pub fn compare_optimizers(
    exp: &ExperimentConfig,
    choices: &[(String, OptimizerChoice)],
) -> Result<Vec<(String, MetricsLog)>, TrainError> {
    choices
        .iter()
        .map(|(label, c)| Ok((label.clone(), exp.run(c.clone())?.log)))
        .collect()
}
