//! Single-term power laws `y = A·c^α` fitted by least squares in log-log
//! space.

use alloc::vec::Vec;

use thiserror::Error;
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} is not strictly positive and finite")]
    NonPositive { index: usize },
    #[error("all compute values are identical")]
    DegenerateAbscissa,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub coefficient: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub const fn new(coefficient: f64, exponent: f64) -> Self {
        Self {
            coefficient,
            exponent,
        }
    }

    pub fn evaluate(&self, c: f64) -> f64 {
        self.coefficient * c.powf(self.exponent)
    }
}

/// Published laws, usable as fixtures.
pub mod published {
    use super::PowerLaw;

    /// LM loss versus training FLOPs, Muon.
    pub const LOSS_MUON: PowerLaw = PowerLaw::new(2.506, -0.052);
    /// LM loss versus training FLOPs, AdamW.
    pub const LOSS_ADAMW: PowerLaw = PowerLaw::new(2.608, -0.054);
    /// Compute-optimal parameter count.
    pub const PARAMS: PowerLaw = PowerLaw::new(0.0483359, 0.5112684);
    /// Compute-optimal token count.
    pub const TOKENS: PowerLaw = PowerLaw::new(3.4480927, 0.4887316);
    /// Learning rate.
    pub const LEARNING_RATE: PowerLaw = PowerLaw::new(0.0127339, -0.0574752);
    /// Batch size.
    pub const BATCH_SIZE: PowerLaw = PowerLaw::new(0.0065202, 0.4137915);
}

/// Fitted law with residual diagnostics in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub law: PowerLaw,
    /// `ln y − (ln A + α ln c)` per input point.
    pub log_residuals: Vec<f64>,
    pub residual_rms: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for (index, &(c, y)) in points.iter().enumerate() {
        if !(c.is_finite() && y.is_finite() && c > 0.0 && y > 0.0) {
            return Err(FitError::NonPositive { index });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    // Centered sums keep the slope accurate when ln c is large (≈ 50 for
    // 1e22 FLOPs).
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateAbscissa);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let log_residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res: f64 = log_residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    Ok(PowerLawFit {
        law: PowerLaw::new(intercept.exp(), slope),
        residual_rms: (ss_res / n).sqrt(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        log_residuals,
    })
}

/// Training FLOPs `C = 6·N·D`.
pub fn compute_flops(params: f64, tokens: f64) -> f64 {
    6.0 * params * tokens
}

/// `count` compute values spaced evenly in log space over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            (a + t * (b - a)).exp()
        })
        .collect()
}
