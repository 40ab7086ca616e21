//! Quintic Newton-Schulz orthogonalization.
//!
//! Starting from `X₀ = M/‖M‖_F`, each step applies
//!
//! ```text
//! X ← a·X + b·(XXᵀ)X + c·(XXᵀ)²X
//! ```
//!
//! which acts on every singular value independently through the scalar
//! polynomial `f(x) = a·x + b·x³ + c·x⁵`. With the default coefficients the
//! singular values are pushed into a band around 1 rather than converging
//! to exactly 1, so the result approximates the polar factor `UVᵀ`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NsError {
    #[error("non-finite value after Newton-Schulz step {step}")]
    NonFinite { step: usize },
    #[error("Newton-Schulz input contains non-finite entries")]
    NonFiniteInput,
    #[error("Newton-Schulz needs at least one step")]
    ZeroSteps,
}

/// Polynomial coefficients and iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub steps: usize,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self {
            a: 3.4445,
            b: -4.7750,
            c: 2.0315,
            steps: 5,
        }
    }
}

impl NsConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NsError> {
        if self.steps == 0 {
            return Err(NsError::ZeroSteps);
        }
        Ok(())
    }

    /// `f(x) = a·x + b·x³ + c·x⁵` in Horner form.
    #[inline]
    pub fn poly(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + x2 * self.c))
    }
}

/// Approximate orthogonalization of `m`.
///
/// The zero matrix maps to itself. Tall inputs are processed through their
/// transpose so the Gram products use the smaller side.
pub fn newton_schulz(m: &Matrix, cfg: &NsConfig) -> Result<Matrix, NsError> {
    cfg.validate()?;
    if !m.is_finite() {
        return Err(NsError::NonFiniteInput);
    }
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok(m.clone());
    }
    let tall = m.rows() > m.cols();
    let mut x = if tall { m.transpose() } else { m.clone() };
    x = x.map(|v| v / norm);
    for step in 1..=cfg.steps {
        let gram = x.gram();
        let gram2 = gram.matmul(&gram).expect("square");
        let poly = gram
            .zip_map(&gram2, |g, g2| cfg.b * g + cfg.c * g2)
            .expect("same shape");
        let px = poly.matmul(&x).expect("conformable");
        x = x.zip_map(&px, |xi, pi| cfg.a * xi + pi).expect("same shape");
        if !x.is_finite() {
            return Err(NsError::NonFinite { step });
        }
    }
    Ok(if tall { x.transpose() } else { x })
}

/// `(x₀, f(x₀), f(f(x₀)), …)` with `steps + 1` entries.
///
/// This is the singular-value evolution of [`newton_schulz`] for a singular
/// value that normalizes to `x₀`.
pub fn scalar_ns_trajectory(x0: f64, cfg: &NsConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.steps + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..cfg.steps {
        x = cfg.poly(x);
        out.push(x);
    }
    out
}

/// Final value of [`scalar_ns_trajectory`].
pub fn scalar_ns(x0: f64, cfg: &NsConfig) -> f64 {
    (0..cfg.steps).fold(x0, |x, _| cfg.poly(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, random_orthogonal, seeded_rng};
    use crate::svd::svd;
    use proptest::prelude::*;

    fn monomial(cfg: &NsConfig, x: f64) -> f64 {
        cfg.a * x + cfg.b * x.powi(3) + cfg.c * x.powi(5)
    }

    #[test]
    fn defaults() {
        let cfg = NsConfig::default();
        assert_eq!((cfg.a, cfg.b, cfg.c, cfg.steps), (3.4445, -4.7750, 2.0315, 5));
    }

    #[test]
    fn zero_passthrough() {
        let z = Matrix::zeros(3, 5);
        assert_eq!(newton_schulz(&z, &NsConfig::default()).unwrap(), z);
    }

    #[test]
    fn zero_steps_rejected() {
        let m = Matrix::identity(2);
        assert_eq!(newton_schulz(&m, &NsConfig::with_steps(0)), Err(NsError::ZeroSteps));
    }

    #[test]
    fn overflow_names_step() {
        let cfg = NsConfig { a: 1e200, b: 0.0, c: 0.0, steps: 4 };
        let err = newton_schulz(&Matrix::identity(2), &cfg).unwrap_err();
        assert_eq!(err, NsError::NonFinite { step: 2 });
    }

    #[test]
    fn trajectory_edge_cases() {
        let cfg = NsConfig::default();
        assert!(scalar_ns_trajectory(0.0, &cfg).iter().all(|&v| v == 0.0));
        assert_eq!(scalar_ns_trajectory(0.0, &cfg).len(), 6);
        let one = scalar_ns_trajectory(1.0, &NsConfig::with_steps(1));
        assert!((one[1] - (cfg.a + cfg.b + cfg.c)).abs() < 1e-15);
    }

    #[test]
    fn trajectory_horner_vs_monomial() {
        let cfg = NsConfig::default();
        let traj = scalar_ns_trajectory(0.5, &cfg);
        let mut x = 0.5;
        for (k, &t) in traj.iter().enumerate().skip(1) {
            x = monomial(&cfg, x);
            assert!((t - x).abs() < 1e-13, "step {k}: {t} vs {x}");
        }
        assert_eq!(scalar_ns(0.5, &cfg), traj[5]);
    }

    #[test]
    fn diagonal_follows_scalar_iteration() {
        let cfg = NsConfig::default();
        let sig = [4.0, 2.5, 1.0, 0.3];
        let norm = sig.iter().map(|s| s * s).sum::<f64>().sqrt();
        for (r, c) in [(4, 4), (4, 7), (9, 4)] {
            let out = newton_schulz(&Matrix::diag(r, c, &sig), &cfg).unwrap();
            let expect: alloc::vec::Vec<f64> = sig.iter().map(|s| scalar_ns(s / norm, &cfg)).collect();
            let oracle = Matrix::diag(r, c, &expect);
            assert!(out.max_abs_diff(&oracle).unwrap() < 1e-12, "{r}x{c}");
        }
    }

    #[test]
    fn random_square_matches_svd_oracle() {
        let cfg = NsConfig::default();
        let mut rng = seeded_rng(99);
        let q = random_orthogonal(&mut rng, 8);
        let p = random_orthogonal(&mut rng, 8);
        // Condition number 100 by construction.
        let sig: alloc::vec::Vec<f64> = (0..8).map(|i| 10f64.powf(-2.0 * i as f64 / 7.0)).collect();
        let m = q.matmul(&Matrix::diag(8, 8, &sig)).unwrap().matmul(&p.transpose()).unwrap();
        let s = svd(&m).unwrap();
        let norm = m.frobenius_norm();
        let g: alloc::vec::Vec<f64> = s.sigma.iter().map(|x| scalar_ns(x / norm, &cfg)).collect();
        let oracle = s.u.matmul(&Matrix::diag(8, 8, &g)).unwrap().matmul(&s.vt).unwrap();
        let out = newton_schulz(&m, &cfg).unwrap();
        assert!(out.sub(&oracle).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn extreme_scales_stay_finite() {
        let base = gaussian_matrix(&mut seeded_rng(4), 5, 3);
        let cfg = NsConfig::default();
        let reference = newton_schulz(&base, &cfg).unwrap();
        for target in [1e-30, 1e30] {
            let m = base.scale(target / base.frobenius_norm());
            let out = newton_schulz(&m, &cfg).unwrap();
            assert!(out.is_finite());
            assert_eq!(out.shape(), (5, 3));
            assert!(out.max_abs_diff(&reference).unwrap() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_zero_singular_values_stay_zero() {
        let mut rng = seeded_rng(17);
        let a = gaussian_matrix(&mut rng, 6, 1)
            .matmul(&gaussian_matrix(&mut rng, 1, 4))
            .unwrap();
        let out = newton_schulz(&a, &NsConfig::default()).unwrap();
        let s = svd(&out).unwrap();
        assert!(s.sigma[1..].iter().all(|&x| x < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn orthogonal_equivariance(rows in 2usize..12, cols in 2usize..12, seed in any::<u64>()) {
            let cfg = NsConfig::default();
            let mut rng = seeded_rng(seed);
            let m = gaussian_matrix(&mut rng, rows, cols);
            let q = random_orthogonal(&mut rng, rows);
            let p = random_orthogonal(&mut rng, cols);
            let rotated = q.matmul(&m).unwrap().matmul_transpose(&p).unwrap();
            let lhs = newton_schulz(&rotated, &cfg).unwrap();
            let rhs = q.matmul(&newton_schulz(&m, &cfg).unwrap()).unwrap().matmul_transpose(&p).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-8);
        }

        #[test]
        fn transpose_equivariance(rows in 1usize..16, cols in 1usize..16, seed in any::<u64>()) {
            let cfg = NsConfig::default();
            let m = gaussian_matrix(&mut seeded_rng(seed), rows, cols);
            let lhs = newton_schulz(&m.transpose(), &cfg).unwrap();
            let rhs = newton_schulz(&m, &cfg).unwrap().transpose();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        }

        #[test]
        fn spectral_consistency(rows in 1usize..24, cols in 1usize..24, seed in any::<u64>()) {
            let cfg = NsConfig::default();
            let m = gaussian_matrix(&mut seeded_rng(seed), rows, cols);
            let norm = m.frobenius_norm();
            let before = svd(&m).unwrap().sigma;
            let after = svd(&newton_schulz(&m, &cfg).unwrap()).unwrap().sigma;
            let mut expect: alloc::vec::Vec<f64> = before.iter().map(|s| scalar_ns(s / norm, &cfg)).collect();
            expect.sort_by(|a, b| b.total_cmp(a));
            for (x, y) in after.iter().zip(&expect) {
                prop_assert!((x - y).abs() < 1e-8, "{} vs {}", x, y);
            }
        }
    }
}
