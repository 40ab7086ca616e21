//! Seeded random matrices.
//!
//! Every randomized routine in the crate draws from [`SeededRng`]
//! (ChaCha8) so runs are reproducible from a `u64` seed on any platform.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::matrix::Matrix;
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| gaussian(rng)).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Orthonormal basis of the column space of a full-column-rank `a`
/// (`rows ≥ cols`) via Householder QR, signs fixed so `diag(R) > 0`.
pub fn qr_q(a: &Matrix) -> Matrix {
    let (m, n) = a.shape();
    assert!(m >= n, "qr_q expects rows >= cols");
    let mut r: Vec<f64> = a.data().to_vec();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut signs = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| r[i * n + k]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[i * n + j]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    r[i * n + j] -= s * v[i - k];
                }
            }
        }
        signs.push(if r[k * n + k] < 0.0 { -1.0 } else { 1.0 });
        reflectors.push(v);
    }
    // Apply the reflectors in reverse to the leading n columns of I.
    let mut q = Matrix::diag(m, n, &signs).into_data();
    for k in (0..n).rev() {
        let v = &reflectors[k];
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in 0..n {
            let s: f64 = (k..m).map(|i| v[i - k] * q[i * n + j]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                q[i * n + j] -= s * v[i - k];
            }
        }
    }
    Matrix::from_raw(m, n, q)
}

/// Haar-distributed `n×n` orthogonal matrix.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
    qr_q(&gaussian_matrix(rng, n, n))
}

/// `rows×k` matrix with orthonormal columns (`k ≤ rows`).
pub fn random_orthonormal_columns(rng: &mut impl Rng, rows: usize, k: usize) -> Matrix {
    qr_q(&gaussian_matrix(rng, rows, k))
}
