//! Mixture-of-experts routing helpers: the Monte Carlo gate scaling factor
//! and the centered auxiliary-loss-free bias update.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use thiserror::Error;

use crate::random::{gaussian, SeededRng};
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoeError {
    #[error("topk must lie in 1..={num_experts}, got {topk}")]
    InvalidTopk { num_experts: usize, topk: usize },
    #[error("need at least one expert and one iteration")]
    Empty,
    #[error("bias has {bias} entries but violation has {violation}")]
    LengthMismatch { bias: usize, violation: usize },
    #[error("update rate must be finite and non-negative")]
    InvalidRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateConfig {
    pub num_experts: usize,
    pub topk: usize,
    pub iter_times: usize,
    pub seed: u64,
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), MoeError> {
        if self.num_experts == 0 || self.iter_times == 0 {
            return Err(MoeError::Empty);
        }
        if self.topk == 0 || self.topk > self.num_experts {
            return Err(MoeError::InvalidTopk {
                num_experts: self.num_experts,
                topk: self.topk,
            });
        }
        Ok(())
    }
}

/// Where router logits come from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LogitSource {
    /// I.i.d. standard normal logits.
    #[default]
    Gaussian,
    /// Every logit equals the given value (zero-variance generator).
    Constant(f64),
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `1/‖p‖₂` for one trial, where `p` is the renormalized top-k of the
/// sigmoid gates.
///
/// Trial `t` draws from its own ChaCha8 stream (`seed`, stream `t`), so the
/// estimate does not depend on how trials are partitioned across workers.
pub fn trial_factor(cfg: &GateConfig, source: LogitSource, trial: u64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    match source {
        LogitSource::Gaussian => {
            let mut rng = SeededRng::seed_from_u64(cfg.seed);
            rng.set_stream(trial);
            scratch.extend((0..cfg.num_experts).map(|_| sigmoid(gaussian(&mut rng))));
        }
        LogitSource::Constant(v) => scratch.resize(cfg.num_experts, sigmoid(v)),
    }
    let k = cfg.topk;
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    let top = &mut scratch[..k];
    top.sort_by(|a, b| b.total_cmp(a));
    let sum: f64 = top.iter().sum();
    let sq: f64 = top.iter().map(|p| (p / sum) * (p / sum)).sum();
    1.0 / sq.sqrt()
}

/// Mean of [`trial_factor`] over `iter_times` trials.
pub fn gate_scaling_factor(cfg: &GateConfig) -> Result<f64, MoeError> {
    gate_scaling_factor_with(cfg, LogitSource::Gaussian)
}

pub fn gate_scaling_factor_with(cfg: &GateConfig, source: LogitSource) -> Result<f64, MoeError> {
    cfg.validate()?;
    let mut scratch = Vec::with_capacity(cfg.num_experts);
    let total: f64 = (0..cfg.iter_times as u64)
        .map(|t| trial_factor(cfg, source, t, &mut scratch))
        .sum();
    Ok(total / cfg.iter_times as f64)
}

fn sign(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn check(bias: &[f64], violation: &[f64], rate: f64) -> Result<(), MoeError> {
    if bias.len() != violation.len() {
        return Err(MoeError::LengthMismatch {
            bias: bias.len(),
            violation: violation.len(),
        });
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(MoeError::InvalidRate);
    }
    Ok(())
}

/// Per-expert increments of the centered rule
/// `bᵢ += u·(sign(eᵢ) − mean(sign(e)))`.
///
/// Each increment is `kᵢ·q` with integer `kᵢ = n·sign(eᵢ) − Σsign(e)` and
/// `q ≈ u/n` rounded to few enough significant bits that every `kᵢ·q` and
/// every partial sum is exact. The increments therefore sum to exactly
/// zero in floating point. The rounding of `q` is about `2⁻³⁹` relative
/// for 64 experts and `2⁻³¹` for 1024.
pub fn auxfree_bias_delta(violation: &[f64], rate: f64) -> Vec<f64> {
    let n = violation.len();
    if n == 0 || rate == 0.0 {
        return vec![0.0; n];
    }
    let signs: Vec<i64> = violation.iter().map(|&e| sign(e)).collect();
    let total: i64 = signs.iter().sum();
    let step = dyadic_step(rate / n as f64, n);
    signs
        .iter()
        .map(|&s| (n as i64 * s - total) as f64 * step)
        .collect()
}

/// Rounds `q` to `53 − ⌈log₂(2n²)⌉ − 1` significant bits.
fn dyadic_step(q: f64, n: usize) -> f64 {
    if q == 0.0 || !q.is_finite() {
        return q;
    }
    let bound = 2.0 * (n as f64) * (n as f64);
    let guard = bound.log2().ceil() as i32 + 1;
    let bits = 53 - guard;
    let exp = q.log2().floor() as i32;
    let scale = 2f64.powi(exp - bits + 1);
    (q / scale).round() * scale
}

/// Centered bias update; see [`auxfree_bias_delta`].
pub fn auxfree_bias_update(bias: &[f64], violation: &[f64], rate: f64) -> Result<Vec<f64>, MoeError> {
    check(bias, violation, rate)?;
    let delta = auxfree_bias_delta(violation, rate);
    Ok(bias.iter().zip(&delta).map(|(b, d)| b + d).collect())
}

/// The uncentered rule `bᵢ += u·sign(eᵢ)`.
pub fn auxfree_bias_update_deepseek(
    bias: &[f64],
    violation: &[f64],
    rate: f64,
) -> Result<Vec<f64>, MoeError> {
    check(bias, violation, rate)?;
    Ok(bias
        .iter()
        .zip(violation)
        .map(|(b, &e)| b + rate * sign(e) as f64)
        .collect())
}

/// Indices of the `k` largest scores, descending; ties broken by index.
pub fn topk_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::seeded_rng;
    use rand::Rng;

    fn cfg(num_experts: usize, topk: usize, iter_times: usize, seed: u64) -> GateConfig {
        GateConfig {
            num_experts,
            topk,
            iter_times,
            seed,
        }
    }

    #[test]
    fn topk_one_is_exactly_one() {
        assert_eq!(gate_scaling_factor(&cfg(8, 1, 100, 1)).unwrap(), 1.0);
    }

    #[test]
    fn equal_logits_give_sqrt_k() {
        for k in 1..=8 {
            let f = gate_scaling_factor_with(&cfg(8, k, 10, 0), LogitSource::Constant(0.3)).unwrap();
            assert!((f - (k as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_is_bounded_and_deterministic() {
        let c = cfg(16, 4, 500, 9);
        let a = gate_scaling_factor(&c).unwrap();
        assert_eq!(a, gate_scaling_factor(&c).unwrap());
        assert!((1.0..=2.0).contains(&a));
        let mut scratch = Vec::new();
        for t in 0..200 {
            let f = trial_factor(&c, LogitSource::Gaussian, t, &mut scratch);
            assert!((1.0..=2.0 + 1e-12).contains(&f));
        }
    }

    #[test]
    fn invalid_config() {
        assert!(matches!(gate_scaling_factor(&cfg(4, 5, 1, 0)), Err(MoeError::InvalidTopk { .. })));
        assert!(matches!(gate_scaling_factor(&cfg(4, 0, 1, 0)), Err(MoeError::InvalidTopk { .. })));
        assert_eq!(gate_scaling_factor(&cfg(4, 1, 0, 0)), Err(MoeError::Empty));
    }

    #[test]
    fn all_positive_violations() {
        let bias = [0.1, -0.2, 0.3];
        let e = [0.5, 2.0, 1e-9];
        assert_eq!(auxfree_bias_update(&bias, &e, 0.01).unwrap(), bias.to_vec());
        let orig = auxfree_bias_update_deepseek(&bias, &e, 0.01).unwrap();
        for (o, b) in orig.iter().zip(bias) {
            assert_eq!(*o, b + 0.01);
        }
    }

    #[test]
    fn opposite_pair() {
        let out = auxfree_bias_update(&[0.0, 0.0], &[1.0, -1.0], 0.25).unwrap();
        assert_eq!(out, vec![0.25, -0.25]);
        assert_eq!(auxfree_bias_update(&[0.0], &[0.0], 0.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(auxfree_bias_update(&[0.0], &[1.0, 2.0], 0.1), Err(MoeError::LengthMismatch { .. })));
        assert_eq!(auxfree_bias_update_deepseek(&[0.0], &[1.0], -1.0), Err(MoeError::InvalidRate));
    }

    #[test]
    fn centered_minus_original_is_uniform_shift() {
        let mut rng = seeded_rng(31);
        for _ in 0..50 {
            let n = rng.random_range(2..80);
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u = 1e-3;
            let zero = vec![0.0; n];
            let m = auxfree_bias_update(&zero, &e, u).unwrap();
            let o = auxfree_bias_update_deepseek(&zero, &e, u).unwrap();
            let mean = e.iter().map(|&x| sign(x) as f64).sum::<f64>() / n as f64;
            for (a, b) in m.iter().zip(&o) {
                assert!((a - b + u * mean).abs() < 1e-11 * u);
            }
            assert_eq!(m.iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn delta_sums_to_zero_for_awkward_counts() {
        for n in [3usize, 7, 64, 1000] {
            let e: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
            for u in [1e-3, 0.1, 1.0 / 3.0, 7.7] {
                let d = auxfree_bias_delta(&e, u);
                assert_eq!(d.iter().sum::<f64>(), 0.0, "n={n} u={u}");
                let mut acc = 0.0;
                for x in d.iter().rev() {
                    acc += x;
                }
                assert_eq!(acc, 0.0);
            }
        }
    }

    #[test]
    fn topk_tie_break() {
        assert_eq!(topk_indices(&[1.0, 3.0, 3.0, 0.0], 2), vec![1, 2]);
    }
}
