//! SVD entropy and normalized singular spectra of weight matrices.
//!
//! For singular values `σ₁…σₙ` with `pᵢ = σᵢ²/Σσⱼ²`:
//!
//! ```text
//! H(σ) = −(1/log n) · Σ pᵢ log pᵢ
//! ```
//!
//! `H = 1` for a flat spectrum and `0` for a rank-one matrix.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::{Matrix, MatrixError};
use crate::svd::svd;
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

/// Singular values at or below this are treated as exactly zero.
pub const SIGMA_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("svd entropy is undefined for an all-zero spectrum")]
    ZeroSpectrum,
    #[error("spectrum length {len} does not match n = {n}")]
    LengthMismatch { len: usize, n: usize },
    #[error("singular values must be finite and non-negative")]
    InvalidSigma,
    #[error("parameter `{0}` has no group assignment")]
    Ungrouped(String),
    #[error("svd of `{name}` failed: {source}")]
    Svd { name: String, source: MatrixError },
}

/// Normalized Shannon entropy of the squared singular values.
///
/// `n` is the number of singular values, zeros included. With `n = 1` the
/// normalizer `log n` vanishes and the entropy is reported as 0.
pub fn svd_entropy(sigma: &[f64], n: usize) -> Result<f64, SpectralError> {
    if sigma.len() != n || n == 0 {
        return Err(SpectralError::LengthMismatch { len: sigma.len(), n });
    }
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(SpectralError::InvalidSigma);
    }
    let top = sigma.iter().fold(0.0f64, |m, &s| m.max(s));
    if top <= SIGMA_FLOOR {
        return Err(SpectralError::ZeroSpectrum);
    }
    if n == 1 {
        return Ok(0.0);
    }
    // Normalizing by the largest value first avoids overflow in σ².
    let sq: Vec<f64> = sigma
        .iter()
        .map(|&s| if s <= SIGMA_FLOOR { 0.0 } else { (s / top) * (s / top) })
        .collect();
    // H·log n = ln Σx − Σ x ln x / Σx, which is exact for flat spectra.
    let total: f64 = sq.iter().sum();
    let xlogx: f64 = sq.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum();
    let h = total.ln() - xlogx / total;
    Ok((h / (n as f64).ln()).clamp(0.0, 1.0))
}

/// Spectrum of one matrix, singular values divided by the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub name: String,
    pub group: String,
    pub normalized_sigma: Vec<f64>,
    pub svd_entropy: f64,
}

pub fn spectrum_of(name: &str, group: &str, m: &Matrix) -> Result<SpectrumReport, SpectralError> {
    let s = svd(m).map_err(|source| SpectralError::Svd {
        name: name.into(),
        source,
    })?;
    let n = s.sigma.len();
    let entropy = svd_entropy(&s.sigma, n)?;
    let top = s.sigma[0];
    Ok(SpectrumReport {
        name: name.into(),
        group: group.into(),
        normalized_sigma: s.sigma.iter().map(|x| x / top).collect(),
        svd_entropy: entropy,
    })
}

/// Per-parameter spectra plus the macro-averaged entropy of each group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSpectra {
    pub params: Vec<SpectrumReport>,
    pub group_entropy: BTreeMap<String, f64>,
}

pub fn spectrum_report(
    weights: &BTreeMap<String, Matrix>,
    groups: &BTreeMap<String, String>,
) -> Result<GroupedSpectra, SpectralError> {
    let mut params = Vec::with_capacity(weights.len());
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (name, m) in weights {
        let group = groups
            .get(name)
            .ok_or_else(|| SpectralError::Ungrouped(name.clone()))?;
        let report = spectrum_of(name, group, m)?;
        let e = sums.entry(group.clone()).or_insert((0.0, 0));
        e.0 += report.svd_entropy;
        e.1 += 1;
        params.push(report);
    }
    let group_entropy = sums
        .into_iter()
        .map(|(g, (s, c))| (g, s / c as f64))
        .collect();
    Ok(GroupedSpectra {
        params,
        group_entropy,
    })
}
