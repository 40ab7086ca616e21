use core::f64::consts::PI;
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DecayShape {
    #[default]
    Constant,
    /// Linear from 1 down to `final_fraction`.
    Linear { final_fraction: f64 },
    /// Half cosine from 1 down to `final_fraction`.
    Cosine { final_fraction: f64 },
}

/// Multiplier on the base learning rate: linear warmup, then decay.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Schedule {
    pub shape: DecayShape,
    pub warmup_steps: usize,
}

impl Schedule {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn cosine(final_fraction: f64) -> Self {
        Self {
            shape: DecayShape::Cosine { final_fraction },
            warmup_steps: 0,
        }
    }

    pub fn linear(final_fraction: f64) -> Self {
        Self {
            shape: DecayShape::Linear { final_fraction },
            warmup_steps: 0,
        }
    }

    pub fn with_warmup(mut self, steps: usize) -> Self {
        self.warmup_steps = steps;
        self
    }

    /// Factor for zero-based `step` out of `total` steps.
    pub fn factor(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps + 1);
        let t = if span == 0 {
            0.0
        } else {
            ((step - self.warmup_steps) as f64 / span as f64).min(1.0)
        };
        match self.shape {
            DecayShape::Constant => 1.0,
            DecayShape::Linear { final_fraction } => 1.0 - (1.0 - final_fraction) * t,
            DecayShape::Cosine { final_fraction } => {
                final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + (PI * t).cos())
            }
        }
    }
}
