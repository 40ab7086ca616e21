//! Run configuration. Settings come from flags, then the `--config` TOML
//! file, then built-in defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use muon_core::optim::{ScalingMode, ScalingVariant};
use muon_core::trainer::{
    Architecture, ExperimentConfig, Nonlinearity, OptimizerChoice, Schedule, TaskKind, TaskSpec,
};
use muon_core::{AdamWConfig, HybridConfig, MuonConfig, NsConfig};

/// Fills every `None` field of `$dst` from `$src`.
macro_rules! fill {
    ($dst:ident, $src:ident; $($field:ident),+ $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field.clone(); } )+
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingArg {
    AdjustedLr,
    UpdateNorm,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskArg {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    Constant,
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityArg {
    Tanh,
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Muon,
    Adamw,
    Hybrid,
}

impl OptimizerArg {
    pub fn label(self) -> &'static str {
        match self {
            OptimizerArg::Muon => "muon",
            OptimizerArg::Adamw => "adamw",
            OptimizerArg::Hybrid => "hybrid",
        }
    }
}

/// Optimizer hyperparameters. `lr` and `weight_decay` apply to Muon;
/// AdamW uses `adamw_lr` and shares `weight_decay`.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSettings {
    /// Muon learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Muon momentum.
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Decoupled weight decay for both optimizers.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Newton-Schulz iterations.
    #[arg(long)]
    pub ns_steps: Option<usize>,
    /// How the orthogonalized update is scaled.
    #[arg(long, value_enum)]
    pub scaling_mode: Option<ScalingArg>,
    /// Hidden size used by the baseline scaling mode.
    #[arg(long)]
    pub baseline_hidden: Option<usize>,
    /// Target update RMS.
    #[arg(long)]
    pub rms_target: Option<f64>,
    /// Nesterov-style momentum input.
    #[arg(long)]
    pub nesterov: Option<bool>,
    /// AdamW learning rate.
    #[arg(long)]
    pub adamw_lr: Option<f64>,
    /// AdamW betas as `b1,b2`.
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// AdamW epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl OptimSettings {
    fn fill_from(&mut self, other: &OptimSettings) {
        fill!(self, other; lr, momentum, weight_decay, ns_steps, scaling_mode, baseline_hidden,
            rms_target, nesterov, adamw_lr, betas, epsilon);
    }

    pub fn muon(&self) -> Result<MuonConfig> {
        let mut c = MuonConfig::default();
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.momentum {
            c.momentum = v;
        }
        if let Some(v) = self.weight_decay {
            c.weight_decay = v;
        }
        if let Some(v) = self.nesterov {
            c.nesterov = v;
        }
        if let Some(n) = self.ns_steps {
            c.ns = NsConfig::with_steps(n);
        }
        let target = self.rms_target.unwrap_or(c.scaling.rms_target);
        let variant = match self.scaling_mode.unwrap_or(ScalingArg::AdjustedLr) {
            ScalingArg::AdjustedLr => ScalingVariant::AdjustedLr,
            ScalingArg::UpdateNorm => ScalingVariant::UpdateNorm,
            ScalingArg::Baseline => ScalingVariant::BaselineSqrtH {
                hidden: self
                    .baseline_hidden
                    .context("scaling_mode = baseline needs baseline_hidden")?,
            },
        };
        c.scaling = ScalingMode {
            variant,
            rms_target: target,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn adamw(&self) -> Result<AdamWConfig> {
        let mut c = AdamWConfig::default();
        if let Some(v) = self.adamw_lr {
            c.lr = v;
        }
        if let Some(v) = self.weight_decay {
            c.weight_decay = v;
        }
        if let Some(b) = &self.betas {
            let [b1, b2] = b[..] else {
                bail!("betas needs exactly two values, got {}", b.len());
            };
            c.beta1 = b1;
            c.beta2 = b2;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn choice(&self, kind: OptimizerArg) -> Result<OptimizerChoice> {
        Ok(match kind {
            OptimizerArg::Muon => OptimizerChoice::Muon(self.muon()?),
            OptimizerArg::Adamw => OptimizerChoice::AdamW(self.adamw()?),
            OptimizerArg::Hybrid => OptimizerChoice::Hybrid(HybridConfig {
                muon: self.muon()?,
                adamw: self.adamw()?,
                decay_exclude: Vec::new(),
            }),
        })
    }
}

/// Toy-model training settings.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    /// Synthetic task.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Hidden size H; layers are 4H×H and H×4H.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Examples generated, 10% held out.
    #[arg(long)]
    pub dataset_size: Option<usize>,
    /// Target noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning-rate decay shape.
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Linear warmup steps.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Final learning rate as a fraction of the base rate.
    #[arg(long)]
    pub final_lr_fraction: Option<f64>,
    /// Activation between layers.
    #[arg(long, value_enum)]
    pub nonlinearity: Option<NonlinearityArg>,
    /// Optimizer for `train`.
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
}

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_DATASET: usize = 256;
pub const DEFAULT_NOISE: f64 = 0.1;
pub const DEFAULT_FINAL_FRACTION: f64 = 0.1;

impl TrainSettings {
    fn fill_from(&mut self, other: &TrainSettings) {
        fill!(self, other; task, hidden, steps, dataset_size, noise, batch_size, schedule, warmup,
            final_lr_fraction, nonlinearity, optimizer);
    }

    pub fn experiment(&self, seed: u64) -> ExperimentConfig {
        let final_fraction = self.final_lr_fraction.unwrap_or(DEFAULT_FINAL_FRACTION);
        let schedule = match self.schedule.unwrap_or(ScheduleArg::Constant) {
            ScheduleArg::Constant => Schedule::constant(),
            ScheduleArg::Linear => Schedule::linear(final_fraction),
            ScheduleArg::Cosine => Schedule::cosine(final_fraction),
        }
        .with_warmup(self.warmup.unwrap_or(0));
        let mut arch = Architecture::rectangular(self.hidden.unwrap_or(DEFAULT_HIDDEN));
        arch.nonlinearity = match self.nonlinearity.unwrap_or(NonlinearityArg::Tanh) {
            NonlinearityArg::Tanh => Nonlinearity::Tanh,
            NonlinearityArg::Relu => Nonlinearity::Relu,
            NonlinearityArg::Identity => Nonlinearity::Identity,
        };
        ExperimentConfig {
            arch,
            task: TaskSpec {
                kind: match self.task.unwrap_or(TaskArg::Regression) {
                    TaskArg::Regression => TaskKind::TeacherStudentRegression,
                    TaskArg::Classification => TaskKind::SyntheticClassification,
                },
                dataset_size: self.dataset_size.unwrap_or(DEFAULT_DATASET),
                noise: self.noise.unwrap_or(DEFAULT_NOISE),
                seed,
            },
            model_seed: seed,
            schedule,
            steps: self.steps.unwrap_or(DEFAULT_STEPS),
            batch_size: self.batch_size,
        }
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub precision: Option<usize>,
    #[serde(default)]
    pub optimizer: OptimSettings,
    #[serde(default)]
    pub train: TrainSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn optimizer_over(&self, flags: &OptimSettings) -> OptimSettings {
        let mut merged = flags.clone();
        merged.fill_from(&self.optimizer);
        merged
    }

    pub fn train_over(&self, flags: &TrainSettings) -> TrainSettings {
        let mut merged = flags.clone();
        merged.fill_from(&self.train);
        merged
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_fail() {
        assert!(RunConfig::parse("lr = 0.1").is_err());
        assert!(RunConfig::parse("[optimizer]\nlearning_rate = 0.1").is_err());
        assert!(RunConfig::parse("[train]\nstep = 3").is_err());
    }

    #[test]
    fn flags_override_file() {
        let cfg = RunConfig::parse(
            "seed = 4\n[optimizer]\nlr = 0.5\nmomentum = 0.9\nscaling_mode = \"update-norm\"\nbetas = [0.8, 0.99]\n",
        )
        .unwrap();
        let flags = OptimSettings {
            lr: Some(0.1),
            ..Default::default()
        };
        let merged = cfg.optimizer_over(&flags);
        let muon = merged.muon().unwrap();
        assert_eq!(muon.lr, 0.1);
        assert_eq!(muon.momentum, 0.9);
        assert_eq!(muon.scaling.variant, ScalingVariant::UpdateNorm);
        let adam = merged.adamw().unwrap();
        assert_eq!((adam.beta1, adam.beta2), (0.8, 0.99));
        assert_eq!(cfg.seed, Some(4));
    }

    #[test]
    fn baseline_needs_hidden() {
        let s = OptimSettings {
            scaling_mode: Some(ScalingArg::Baseline),
            ..Default::default()
        };
        assert!(s.muon().is_err());
        let s = OptimSettings {
            baseline_hidden: Some(64),
            ..s
        };
        assert_eq!(s.muon().unwrap().scaling.variant, ScalingVariant::BaselineSqrtH { hidden: 64 });
    }

    #[test]
    fn invalid_values_surface_core_errors() {
        let s = OptimSettings {
            momentum: Some(1.5),
            ..Default::default()
        };
        let err = s.muon().unwrap_err().to_string();
        assert!(err.contains("momentum"), "{err}");
    }
}
