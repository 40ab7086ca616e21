use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::TrainError;
use crate::matrix::Matrix;
use crate::optim::ParamKind;
use crate::random::gaussian_matrix;
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nonlinearity {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Nonlinearity {
    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Identity => x,
        }
    }

    /// Derivative in terms of the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - y * y,
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean of squared errors over every output entry.
    Mse,
    /// Mean over rows of softmax cross-entropy against one-hot targets.
    CrossEntropy,
}

/// Layer widths plus the activation used between layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// `dims[0]` is the input width, `dims[i+1]` the width after layer `i`.
    pub dims: Vec<usize>,
    pub nonlinearity: Nonlinearity,
}

impl Architecture {
    /// Two layers `H → 4H → H`, so the weights are `4H×H` and `H×4H`.
    pub fn rectangular(hidden: usize) -> Self {
        Self {
            dims: alloc::vec![hidden, 4 * hidden, hidden],
            nonlinearity: Nonlinearity::Tanh,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weight: Matrix,
    /// `1 × out`, multiplies the pre-activation per output unit.
    pub gain: Matrix,
}

/// Stack of gained linear layers. The activation follows every layer but
/// the last.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub layers: Vec<Layer>,
    pub nonlinearity: Nonlinearity,
}

pub fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub fn gain_name(layer: usize) -> String {
    format!("layer{layer}.gain")
}

impl ToyModel {
    /// Gaussian weights scaled by `1/√fan_in`, unit gains.
    pub fn init(arch: &Architecture, rng: &mut impl Rng) -> Result<Self, TrainError> {
        if arch.dims.len() < 2 || arch.dims.contains(&0) {
            return Err(TrainError::InvalidArchitecture);
        }
        let layers = arch
            .dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                Layer {
                    weight: gaussian_matrix(rng, fan_out, fan_in).scale(1.0 / (fan_in as f64).sqrt()),
                    gain: Matrix::filled(1, fan_out, 1.0),
                }
            })
            .collect();
        Ok(Self {
            layers,
            nonlinearity: arch.nonlinearity,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    /// Every parameter by name, in layer order, weight before gain.
    pub fn params(&self) -> Vec<(String, &Matrix, ParamKind)> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push((weight_name(i), &l.weight, ParamKind::MatrixParam));
            out.push((gain_name(i), &l.gain, ParamKind::VectorParam));
        }
        out
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let (layer, field) = name.strip_prefix("layer")?.split_once('.')?;
        let l = self.layers.get_mut(layer.parse::<usize>().ok()?)?;
        match field {
            "weight" => Some(&mut l.weight),
            "gain" => Some(&mut l.gain),
            _ => None,
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<(), TrainError> {
        if x.cols() != self.input_dim() {
            return Err(TrainError::DimensionMismatch {
                what: "input",
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix, TrainError> {
        self.check_input(x)?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.matmul_transpose(&l.weight)?;
            let act = if i == last { Nonlinearity::Identity } else { self.nonlinearity };
            h = Matrix::from_fn(z.rows(), z.cols(), |r, c| act.apply(z.get(r, c) * l.gain.get(0, c)));
        }
        Ok(h)
    }

    pub fn loss(&self, x: &Matrix, y: &Matrix, kind: LossKind) -> Result<f64, TrainError> {
        let out = self.forward(x)?;
        check_targets(&out, y)?;
        Ok(loss_and_grad(&out, y, kind).0)
    }
}

fn check_targets(out: &Matrix, y: &Matrix) -> Result<(), TrainError> {
    if out.shape() != y.shape() {
        return Err(TrainError::DimensionMismatch {
            what: "target",
            expected: out.cols(),
            found: y.cols(),
        });
    }
    Ok(())
}

/// Loss and its gradient with respect to the network output.
fn loss_and_grad(out: &Matrix, y: &Matrix, kind: LossKind) -> (f64, Matrix) {
    match kind {
        LossKind::Mse => {
            let n = out.len() as f64;
            let diff = out.sub(y).expect("shapes checked");
            let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
            (loss, diff.scale(2.0 / n))
        }
        LossKind::CrossEntropy => {
            let (rows, cols) = out.shape();
            let mut grad = Vec::with_capacity(rows * cols);
            let mut loss = 0.0;
            for r in 0..rows {
                let logits = out.row(r);
                let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let denom: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
                let log_z = max + denom.ln();
                for (c, &v) in logits.iter().enumerate() {
                    let t = y.get(r, c);
                    loss -= t * (v - log_z);
                    grad.push(((v - log_z).exp() - t) / rows as f64);
                }
            }
            (loss / rows as f64, Matrix::from_raw(rows, cols, grad))
        }
    }
}

/// Loss on `(x, y)` and the exact gradient of every parameter.
pub fn forward_backward(
    model: &ToyModel,
    x: &Matrix,
    y: &Matrix,
    kind: LossKind,
) -> Result<(f64, BTreeMap<String, Matrix>), TrainError> {
    model.check_input(x)?;
    let last = model.layers.len() - 1;
    // Per layer: input h, linear output z, gained pre-activation s, output a.
    let mut inputs = Vec::with_capacity(model.layers.len());
    let mut linear = Vec::with_capacity(model.layers.len());
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut h = x.clone();
    for (i, l) in model.layers.iter().enumerate() {
        let z = h.matmul_transpose(&l.weight)?;
        let s = Matrix::from_fn(z.rows(), z.cols(), |r, c| z.get(r, c) * l.gain.get(0, c));
        let act = if i == last { Nonlinearity::Identity } else { model.nonlinearity };
        let a = s.map(|v| act.apply(v));
        inputs.push(h);
        linear.push(z);
        pre.push(s);
        h = a;
    }
    check_targets(&h, y)?;
    let (loss, mut d_out) = loss_and_grad(&h, y, kind);

    let mut grads = BTreeMap::new();
    for i in (0..model.layers.len()).rev() {
        let l = &model.layers[i];
        let act = if i == last { Nonlinearity::Identity } else { model.nonlinearity };
        let s = &pre[i];
        let d_s = Matrix::from_fn(s.rows(), s.cols(), |r, c| {
            let v = s.get(r, c);
            d_out.get(r, c) * act.derivative(v, act.apply(v))
        });
        let z = &linear[i];
        let d_gain = Matrix::from_fn(1, s.cols(), |_, c| {
            (0..s.rows()).map(|r| d_s.get(r, c) * z.get(r, c)).sum()
        });
        let d_z = Matrix::from_fn(s.rows(), s.cols(), |r, c| d_s.get(r, c) * l.gain.get(0, c));
        grads.insert(weight_name(i), d_z.transpose_matmul(&inputs[i])?);
        grads.insert(gain_name(i), d_gain);
        if i > 0 {
            d_out = d_z.matmul(&l.weight)?;
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, seeded_rng};
    use alloc::vec;
    use proptest::prelude::*;

    fn central_difference(
        model: &ToyModel,
        x: &Matrix,
        y: &Matrix,
        kind: LossKind,
        name: &str,
        idx: usize,
        h: f64,
    ) -> f64 {
        let mut plus = model.clone();
        let mut minus = model.clone();
        let bump = |m: &mut ToyModel, d: f64| {
            let p = m.param_mut(name).unwrap();
            let mut data = p.data().to_vec();
            data[idx] += d;
            *p = Matrix::new(p.rows(), p.cols(), data).unwrap();
        };
        bump(&mut plus, h);
        bump(&mut minus, -h);
        (plus.loss(x, y, kind).unwrap() - minus.loss(x, y, kind).unwrap()) / (2.0 * h)
    }

    fn check_gradients(model: &ToyModel, x: &Matrix, y: &Matrix, kind: LossKind) -> Result<(), String> {
        let (_, grads) = forward_backward(model, x, y, kind).unwrap();
        for (name, p, _) in model.params() {
            let g = &grads[&name];
            assert_eq!(g.shape(), p.shape());
            for idx in 0..p.len() {
                let a = g.data()[idx];
                let n = central_difference(model, x, y, kind, &name, idx, 1e-5);
                if (a - n).abs() > 1e-5 * a.abs().max(n.abs()).max(1e-3) {
                    return Err(format!("{name}[{idx}]: analytic {a} vs numeric {n}"));
                }
            }
        }
        Ok(())
    }

    #[test]
    fn teacher_equals_student_gives_zero() {
        let mut rng = seeded_rng(1);
        let arch = Architecture {
            dims: vec![4, 3],
            nonlinearity: Nonlinearity::Identity,
        };
        let model = ToyModel::init(&arch, &mut rng).unwrap();
        let x = gaussian_matrix(&mut rng, 10, 4);
        let y = model.forward(&x).unwrap();
        let (loss, grads) = forward_backward(&model, &x, &y, LossKind::Mse).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.values().all(Matrix::is_zero));
    }

    #[test]
    fn init_scaling_and_names() {
        let mut rng = seeded_rng(2);
        let model = ToyModel::init(&Architecture::rectangular(64), &mut rng).unwrap();
        assert_eq!(model.layers[0].weight.shape(), (256, 64));
        assert_eq!(model.layers[1].weight.shape(), (64, 256));
        let rms = model.layers[0].weight.rms();
        assert!((rms - 0.125).abs() < 0.01, "{rms}");
        let names: Vec<String> = model.params().into_iter().map(|p| p.0).collect();
        assert_eq!(names, ["layer0.weight", "layer0.gain", "layer1.weight", "layer1.gain"]);
        assert!(ToyModel::init(&Architecture { dims: vec![3], nonlinearity: Nonlinearity::Tanh }, &mut rng).is_err());
    }

    #[test]
    fn dimension_errors() {
        let mut rng = seeded_rng(3);
        let model = ToyModel::init(&Architecture::rectangular(2), &mut rng).unwrap();
        let x = Matrix::zeros(3, 5);
        assert!(matches!(
            forward_backward(&model, &x, &Matrix::zeros(3, 2), LossKind::Mse),
            Err(TrainError::DimensionMismatch { what: "input", expected: 2, found: 5 })
        ));
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            forward_backward(&model, &x, &Matrix::zeros(3, 4), LossKind::Mse),
            Err(TrainError::DimensionMismatch { what: "target", .. })
        ));
    }

    #[test]
    fn relu_gradients_on_fixed_seed() {
        let mut rng = seeded_rng(4);
        let arch = Architecture {
            dims: vec![3, 5, 2],
            nonlinearity: Nonlinearity::Relu,
        };
        let model = ToyModel::init(&arch, &mut rng).unwrap();
        let x = gaussian_matrix(&mut rng, 6, 3);
        let y = gaussian_matrix(&mut rng, 6, 2);
        check_gradients(&model, &x, &y, LossKind::Mse).unwrap();
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let model = ToyModel {
            layers: vec![Layer {
                weight: Matrix::zeros(4, 2),
                gain: Matrix::filled(1, 4, 1.0),
            }],
            nonlinearity: Nonlinearity::Identity,
        };
        let x = Matrix::filled(3, 2, 1.0);
        let y = Matrix::from_fn(3, 4, |r, c| if r == c { 1.0 } else { 0.0 });
        let loss = model.loss(&x, &y, LossKind::CrossEntropy).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradients_match_finite_differences(
            seed in any::<u64>(),
            dims in prop::collection::vec(1usize..5, 2..4),
            batch in 1usize..6,
            tanh in any::<bool>(),
            ce in any::<bool>(),
        ) {
            let mut rng = seeded_rng(seed);
            let arch = Architecture {
                dims: dims.clone(),
                nonlinearity: if tanh { Nonlinearity::Tanh } else { Nonlinearity::Identity },
            };
            let mut model = ToyModel::init(&arch, &mut rng).unwrap();
            for l in &mut model.layers {
                l.gain = gaussian_matrix(&mut rng, 1, l.gain.cols());
            }
            let x = gaussian_matrix(&mut rng, batch, dims[0]);
            let out = *dims.last().unwrap();
            let (y, kind) = if ce {
                (Matrix::from_fn(batch, out, |r, c| if c == r % out { 1.0 } else { 0.0 }), LossKind::CrossEntropy)
            } else {
                (gaussian_matrix(&mut rng, batch, out), LossKind::Mse)
            };
            let loss = model.loss(&x, &y, kind).unwrap();
            prop_assert!(loss >= 0.0);
            if let Err(msg) = check_gradients(&model, &x, &y, kind) {
                prop_assert!(false, "{}", msg);
            }
        }
    }
}
