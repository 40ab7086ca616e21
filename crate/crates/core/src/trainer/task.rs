use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::model::{Architecture, LossKind, ToyModel};
use super::TrainError;
use crate::matrix::Matrix;
use crate::random::{gaussian, gaussian_matrix, SeededRng};
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

/// Fraction of examples held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Targets are a fixed random teacher's outputs plus Gaussian noise.
    TeacherStudentRegression,
    /// Labels are the argmax of the noisy teacher logits.
    SyntheticClassification,
}

impl TaskKind {
    pub fn loss(self) -> LossKind {
        match self {
            TaskKind::TeacherStudentRegression => LossKind::Mse,
            TaskKind::SyntheticClassification => LossKind::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dataset_size: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Train/validation split; classification targets are one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train_x: Matrix,
    pub train_y: Matrix,
    pub val_x: Matrix,
    pub val_y: Matrix,
    pub loss: LossKind,
}

pub(crate) fn select_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), m.cols(), |r, c| m.get(idx[r], c))
}

/// Builds the dataset for `spec`. Inputs are standard normal and the
/// teacher shares the student's architecture.
///
/// Streams of the seed: 1 teacher, 2 inputs, 3 noise, 4 split. Stream 0 is
/// left to model initialization.
pub fn generate(spec: &TaskSpec, arch: &Architecture) -> Result<Dataset, TrainError> {
    let n_val = ((spec.dataset_size as f64) * VALIDATION_FRACTION).round() as usize;
    if n_val == 0 || n_val >= spec.dataset_size {
        return Err(TrainError::DatasetTooSmall(spec.dataset_size));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(TrainError::InvalidConfig("noise must be finite and non-negative"));
    }
    let stream = |s: u64| {
        let mut rng = SeededRng::seed_from_u64(spec.seed);
        rng.set_stream(s);
        rng
    };
    let teacher = ToyModel::init(arch, &mut stream(1))?;
    let x = gaussian_matrix(&mut stream(2), spec.dataset_size, arch.input_dim());
    let mut noise_rng = stream(3);
    let clean = teacher.forward(&x)?;
    let noisy = Matrix::from_fn(clean.rows(), clean.cols(), |r, c| {
        clean.get(r, c) + spec.noise * gaussian(&mut noise_rng)
    });
    let y = match spec.kind {
        TaskKind::TeacherStudentRegression => noisy,
        TaskKind::SyntheticClassification => {
            Matrix::from_fn(noisy.rows(), noisy.cols(), |r, c| {
                let row = noisy.row(r);
                let best = (0..row.len())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                    .expect("non-empty row");
                if c == best {
                    1.0
                } else {
                    0.0
                }
            })
        }
    };
    let mut order: Vec<usize> = (0..spec.dataset_size).collect();
    order.shuffle(&mut stream(4));
    let (val, train) = order.split_at(n_val);
    Ok(Dataset {
        train_x: select_rows(&x, train),
        train_y: select_rows(&y, train),
        val_x: select_rows(&x, val),
        val_y: select_rows(&y, val),
        loss: spec.kind.loss(),
    })
}
