//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Used as a verification oracle and for spectral diagnostics, never in the
//! optimizer hot path. Accuracy over speed: every column pair is swept until
//! the cosine between columns drops below the threshold.

use alloc::vec;
use alloc::vec::Vec;


use crate::matrix::{dot, Matrix, MatrixError};
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

/// Largest supported side length.
pub const MAX_SVD_DIM: usize = 4096;

/// Orthogonality threshold on `|wₚ·w_q| / (‖wₚ‖‖w_q‖)`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-14;

/// `a = u · diag(sigma) · vt` with `r = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `rows×r`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `r×cols`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let r = self.sigma.len();
        let scaled = Matrix::from_fn(self.u.rows(), r, |i, j| self.u.get(i, j) * self.sigma[j]);
        scaled.matmul(&self.vt).expect("svd factors are conformable")
    }

    /// The polar factor `u · vt`, i.e. the exact orthogonalization.
    pub fn polar(&self) -> Matrix {
        self.u.matmul(&self.vt).expect("svd factors are conformable")
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().filter(|&&s| s > top * rel_tol).count()
    }
}

/// Singular value decomposition of `a`.
///
/// Deterministic for a fixed input. Errors if a side exceeds
/// [`MAX_SVD_DIM`] or the sweeps do not converge within
/// `100·max(rows, cols)`.
pub fn svd(a: &Matrix) -> Result<SvdResult, MatrixError> {
    let (rows, cols) = a.shape();
    if rows > MAX_SVD_DIM || cols > MAX_SVD_DIM {
        return Err(MatrixError::TooLarge {
            rows,
            cols,
            max: MAX_SVD_DIM,
        });
    }
    if !a.is_finite() {
        let idx = a.data().iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(MatrixError::NonFinite {
            row: idx / cols,
            col: idx % cols,
        });
    }
    if rows >= cols {
        tall_svd(a)
    } else {
        let t = tall_svd(&a.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        })
    }
}

fn tall_svd(a: &Matrix) -> Result<SvdResult, MatrixError> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();

    // Long columns accumulate dot-product rounding of order m·ε.
    let tol = OFF_DIAGONAL_TOL.max(m as f64 * f64::EPSILON);
    let max_sweeps = 100 * m.max(n);
    let mut converged = n < 2;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(MatrixError::SvdNoConvergence { sweeps: max_sweeps });
    }

    let norms: Vec<f64> = w.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let top = sigma[0];
    let null_tol = top * (m.max(n) as f64) * f64::EPSILON * 4.0;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if sigma[k] > null_tol && sigma[k] > 0.0 {
            u_cols.push(w[i].iter().map(|x| x / sigma[k]).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            pending.push(k);
        }
    }
    complete_basis(&mut u_cols, &pending, m);

    let u = Matrix::from_fn(m, n, |r, c| u_cols[c][r]);
    let vt = Matrix::from_fn(n, n, |r, c| v[order[r]][c]);
    Ok(SvdResult { u, sigma, vt })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Replaces the columns listed in `pending` with unit vectors orthogonal to
/// every other column (modified Gram-Schmidt over the standard basis).
fn complete_basis(cols: &mut [Vec<f64>], pending: &[usize], m: usize) {
    for &k in pending {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            // Two passes of re-orthogonalization for stability.
            for _ in 0..2 {
                for (j, col) in cols.iter().enumerate() {
                    if j == k || (pending.contains(&j) && dot(col, col) == 0.0) {
                        continue;
                    }
                    let proj = dot(&cand, col);
                    for (x, y) in cand.iter_mut().zip(col) {
                        *x -= proj * y;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > best_norm {
                best_norm = norm;
                best = Some(cand);
            }
            if best_norm > 0.5 {
                break;
            }
        }
        let cand = best.expect("m > number of filled columns");
        cols[k] = cand.iter().map(|x| x / best_norm).collect();
    }
}
