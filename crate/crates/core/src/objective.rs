//! Differentiable training objectives.
//!
//! The main objective is a fully connected tanh network with mean squared
//! error and an L2 penalty on the weight matrices. All parameters live in one
//! flat `f64` vector laid out layer by layer as `W_0, b_0, W_1, b_1, ...`,
//! where `W_l` is stored row-major with shape `(fan_out, fan_in)`.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("invalid layer sizes {0:?}: need at least two layers, each of width >= 1")]
    InvalidSpec(Vec<usize>),
    #[error("weight decay must be finite and non-negative, got {0}")]
    InvalidWeightDecay(f64),
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("{what} have {got} columns, expected {expected}")]
    Columns {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("batch has {inputs} input rows but {targets} target rows")]
    RowMismatch { inputs: usize, targets: usize },
    #[error("batch is empty")]
    EmptyBatch,
}

pub type Result<T, E = ObjectiveError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Linear,
}

/// A set of training rows: `inputs` is `rows x input_dim`, `targets` is
/// `rows x output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Array2<f64>,
    targets: Array2<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(ObjectiveError::RowMismatch {
                inputs: inputs.nrows(),
                targets: targets.nrows(),
            });
        }
        if inputs.nrows() == 0 {
            return Err(ObjectiveError::EmptyBatch);
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }
}

/// A loss `f(x; batch)` together with its exact gradient.
///
/// Implementations must be pure: the same `(params, batch)` always yields
/// bitwise-identical results.
pub trait Objective {
    /// Length of the parameter vector.
    fn dim(&self) -> usize;

    fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64>;

    fn loss_and_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)>;

    fn grad(&self, params: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        self.loss_and_grad(params, batch).map(|(_, g)| g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: Range<usize>,
    bias: Range<usize>,
}

/// Architecture of a tanh MLP: hidden layers always use tanh, the output
/// layer uses `final_activation`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    final_activation: Activation,
    layers: Vec<Layer>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, final_activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(ObjectiveError::InvalidSpec(layer_sizes));
        }
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        let mut offset = 0;
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let weights = offset..offset + fan_in * fan_out;
            let bias = weights.end..weights.end + fan_out;
            offset = bias.end;
            layers.push(Layer {
                fan_in,
                fan_out,
                weights,
                bias,
            });
        }
        Ok(Self {
            layer_sizes,
            final_activation,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn final_activation(&self) -> Activation {
        self.final_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// `sum_i (s_i * s_{i+1} + s_{i+1})`
    pub fn param_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.end)
    }

    /// Mask that is `true` on weight entries and `false` on biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.param_count()];
        for layer in &self.layers {
            mask[layer.weights.clone()].fill(true);
        }
        mask
    }

    /// Squared Euclidean norm of the weight entries (biases excluded).
    pub fn weight_norm_sq(&self, params: &[f64]) -> f64 {
        self.layers
            .iter()
            .map(|l| params[l.weights.clone()].iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.param_count()];
        for layer in &self.layers {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for w in &mut params[layer.weights.clone()] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        params
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(ObjectiveError::ParamLength {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(ObjectiveError::Columns {
                what: "inputs",
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        Ok(())
    }

    fn check_batch(&self, params: &[f64], batch: &Batch) -> Result<()> {
        self.check_params(params)?;
        self.check_inputs(&batch.inputs.view())?;
        if batch.targets.ncols() != self.output_dim() {
            return Err(ObjectiveError::Columns {
                what: "targets",
                expected: self.output_dim(),
                got: batch.targets.ncols(),
            });
        }
        Ok(())
    }

    fn weights<'a>(&self, layer: &Layer, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((layer.fan_out, layer.fan_in), &params[layer.weights.clone()])
            .expect("layer slice matches its shape")
    }

    fn activation(&self, index: usize) -> Activation {
        if index + 1 == self.layers.len() {
            self.final_activation
        } else {
            Activation::Tanh
        }
    }

    /// Post-activation outputs of every layer, first hidden layer to output.
    fn activations(&self, params: &[f64], inputs: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().map_or(inputs, |a| a.view());
            let w = self.weights(layer, params);
            let b = ArrayView2::from_shape((1, layer.fan_out), &params[layer.bias.clone()])
                .expect("bias slice matches its shape");
            let mut z = Array2::zeros((prev.nrows(), layer.fan_out));
            z.assign(&b);
            general_mat_mul(1.0, &prev, &w.t(), 1.0, &mut z);
            if self.activation(i) == Activation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    /// Network output for every row of `inputs`.
    pub fn forward(&self, params: &[f64], inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_params(params)?;
        self.check_inputs(&inputs)?;
        Ok(self.activations(params, inputs).pop().expect("at least one layer"))
    }
}

/// MSE loss of an [`MlpSpec`] network with L2 weight decay:
///
/// `f(x) = 1/(B * d_out) * sum_rows |out - target|^2 + (lambda/2) * |W|^2`
///
/// The squared error is averaged over every output element, so learning
/// rates transfer between one-output regression and wide autoencoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    weight_decay: f64,
}

impl Mlp {
    pub fn new(spec: MlpSpec, weight_decay: f64) -> Result<Self> {
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(ObjectiveError::InvalidWeightDecay(weight_decay));
        }
        Ok(Self { spec, weight_decay })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    fn data_term(&self, output: &Array2<f64>, targets: &Array2<f64>) -> f64 {
        let sq: f64 = output.iter().zip(targets).map(|(o, t)| (o - t) * (o - t)).sum();
        sq / output.len() as f64
    }

    fn decay_term(&self, params: &[f64]) -> f64 {
        if self.weight_decay == 0.0 {
            return 0.0;
        }
        0.5 * self.weight_decay * self.spec.weight_norm_sq(params)
    }
}

impl Objective for Mlp {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        self.spec.check_batch(params, batch)?;
        let output = self.spec.forward(params, batch.inputs.view())?;
        Ok(self.data_term(&output, &batch.targets) + self.decay_term(params))
    }

    fn loss_and_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let spec = &self.spec;
        spec.check_batch(params, batch)?;
        let inputs = batch.inputs.view();
        let acts = spec.activations(params, inputs);
        let output = acts.last().expect("at least one layer");
        let loss = self.data_term(output, &batch.targets) + self.decay_term(params);

        let mut grad = vec![0.0; spec.param_count()];
        let scale = 2.0 / output.len() as f64;
        let mut delta: Array2<f64> = (output - &batch.targets) * scale;
        if spec.final_activation == Activation::Tanh {
            delta.zip_mut_with(output, |d, a| *d *= 1.0 - a * a);
        }

        for (i, layer) in spec.layers.iter().enumerate().rev() {
            let prev = if i == 0 { inputs } else { acts[i - 1].view() };
            {
                let mut gw = ArrayViewMut2::from_shape(
                    (layer.fan_out, layer.fan_in),
                    &mut grad[layer.weights.clone()],
                )
                .expect("layer slice matches its shape");
                general_mat_mul(1.0, &delta.t(), &prev, 0.0, &mut gw);
            }
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            grad[layer.bias.clone()].copy_from_slice(gb.as_slice().expect("contiguous"));
            if self.weight_decay != 0.0 {
                let w = &params[layer.weights.clone()];
                for (g, w) in grad[layer.weights.clone()].iter_mut().zip(w) {
                    *g += self.weight_decay * w;
                }
            }
            if i > 0 {
                let mut next = delta.dot(&spec.weights(layer, params));
                next.zip_mut_with(&acts[i - 1], |d, a| *d *= 1.0 - a * a);
                delta = next;
            }
        }
        Ok((loss, grad))
    }
}

/// `f(x) = 0.5 * x^T A x - b^T x`. Ignores the batch; used to exercise the
/// subspace optimizer on problems with known minimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: Array2<f64>,
    b: Vec<f64>,
}

impl Quadratic {
    /// `a` must be square with side `b.len()`; symmetry is the caller's job.
    pub fn new(a: Array2<f64>, b: Vec<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.ncols() != b.len() {
            return Err(ObjectiveError::Columns {
                what: "quadratic matrix",
                expected: b.len(),
                got: a.ncols(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        self.loss_and_grad(params, batch).map(|(f, _)| f)
    }

    fn loss_and_grad(&self, params: &[f64], _batch: &Batch) -> Result<(f64, Vec<f64>)> {
        if params.len() != self.dim() {
            return Err(ObjectiveError::ParamLength {
                expected: self.dim(),
                got: params.len(),
            });
        }
        let x = ndarray::ArrayView1::from(params);
        let ax = self.a.dot(&x);
        let value = 0.5 * x.dot(&ax) - crate::linalg::dot(&self.b, params);
        let grad = ax.iter().zip(&self.b).map(|(ax, b)| ax - b).collect();
        Ok((value, grad))
    }
}

/// Central-difference gradient `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + eps;
            let plus = f(&work);
            work[i] = x[i] - eps;
            let minus = f(&work);
            work[i] = x[i];
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}
