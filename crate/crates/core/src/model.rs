//! Dense classifier with hand-written forward and backward passes.
//!
//! Hidden layers use ReLU. The output layer is a sigmoid over a single unit
//! (binary, probability of class 1) or a softmax over two or more units.
//! Training minimizes [`crate::loss::objective`] one mini-batch at a time
//! and is fully determined by the config seed.
//!
//! # Checkpoint layout (version 1)
//!
//! All integers and floats are little-endian.
//!
//! | bytes        | content                                             |
//! |--------------|-----------------------------------------------------|
//! | 8            | magic `FSKCKPT\0`                                   |
//! | 4 (u32)      | format version, `1`                                 |
//! | 1 (u8)       | activation: `0` sigmoid output, `1` softmax output  |
//! | 3            | reserved, zero                                      |
//! | 8 (u64)      | training seed                                       |
//! | 32           | SHA-256 of the experiment config (zeros if unknown) |
//! | 4 (u32)      | number of layer dims `D`                            |
//! | 4·D (u32)    | layer dims, input first                             |
//! | per layer    | `out×in` f64 weights row-major, then `out` f64 bias |

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{minibatches, LabeledExample, SplitSet};
use crate::loss::{objective, BatchPrediction, LossError, LossWeights, Objective};
use crate::metrics::{self, Group, PredictionLog, PredictionRecord};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache does not match parameters: {0}")]
    MismatchedCache(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ModelError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != cols {
                return Err(ModelError::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.as_ref().len()
                )));
            }
            data.extend_from_slice(r.as_ref());
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    ReluHiddenSigmoidOut,
    ReluHiddenSoftmaxOut,
}

impl Activation {
    /// Sigmoid for a single output unit, softmax otherwise.
    pub fn for_output_dim(out: usize) -> Self {
        if out == 1 {
            Activation::ReluHiddenSigmoidOut
        } else {
            Activation::ReluHiddenSoftmaxOut
        }
    }
}

/// One fully connected layer: `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(ModelError::Config(format!("need at least 2 layer dims, got {dims:?}")));
    }
    if dims.contains(&0) {
        return Err(ModelError::Config(format!("layer dims must be positive: {dims:?}")));
    }
    Ok(())
}

/// Seeded uniform(−1/√in, 1/√in) weights and zero biases.
pub fn init_params(layer_dims: &[usize], seed: u64) -> Result<ModelParams> {
    check_dims(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let bound = 1.0 / (inputs as f64).sqrt();
            let weights = (0..inputs * outputs)
                .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
                .collect();
            Dense {
                inputs,
                outputs,
                weights,
                bias: vec![0.0; outputs],
            }
        })
        .collect();
    Ok(ModelParams {
        layers,
        activation: Activation::for_output_dim(*layer_dims.last().unwrap_or(&1)),
    })
}

impl ModelParams {
    /// All-zero parameters with the given dims.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(ModelParams {
            layers,
            activation: Activation::for_output_dim(*layer_dims.last().unwrap_or(&1)),
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        d.extend(self.layers.last().map(|l| l.outputs));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_classes(&self) -> usize {
        match self.activation {
            Activation::ReluHiddenSigmoidOut => 2,
            Activation::ReluHiddenSoftmaxOut => self.output_dim(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(ModelError::Config("model has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ModelError::Config(format!("layer {k} storage does not match its dims")));
            }
            if k > 0 && self.layers[k - 1].outputs != l.inputs {
                return Err(ModelError::Config(format!("layer {k} input does not chain")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(ModelError::Config(format!("layer {k} has a non-finite entry")));
            }
        }
        let expected = Activation::for_output_dim(self.output_dim());
        if self.activation != expected {
            return Err(ModelError::Config(format!(
                "{:?} head does not fit {} outputs",
                self.activation,
                self.output_dim()
            )));
        }
        Ok(())
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

/// Intermediate values recorded by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    pub inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Matrix>,
    /// Final probabilities.
    pub probs: Matrix,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn affine(layer: &Dense, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows, layer.outputs);
    for r in 0..x.rows {
        let xr = x.row(r);
        for o in 0..layer.outputs {
            let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            let dot: f64 = w.iter().zip(xr).map(|(a, b)| a * b).sum();
            out.data[r * layer.outputs + o] = dot + layer.bias[o];
        }
    }
    out
}

pub fn forward(params: &ModelParams, features: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if features.cols != params.input_dim() {
        return Err(ModelError::Shape(format!(
            "features have {} columns, model expects {}",
            features.cols,
            params.input_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers);
    let mut x = features.clone();
    for (k, layer) in params.layers.iter().enumerate() {
        let z = affine(layer, &x);
        inputs.push(x);
        x = if k + 1 < n_layers {
            Matrix {
                // not f64::max, which would turn NaN into 0 and hide divergence
                data: z.data.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect(),
                ..z
            }
        } else {
            output_activation(params.activation, &z)
        };
        pre.push(z);
    }
    let cache = ForwardCache {
        inputs,
        pre,
        probs: x.clone(),
    };
    Ok((x, cache))
}

fn output_activation(act: Activation, z: &Matrix) -> Matrix {
    match act {
        Activation::ReluHiddenSigmoidOut => Matrix {
            data: z.data.iter().map(|&v| sigmoid(v)).collect(),
            ..z.clone()
        },
        Activation::ReluHiddenSoftmaxOut => {
            let mut out = z.clone();
            for row in out.data.chunks_mut(z.cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            out
        }
    }
}

/// Gradient of one layer's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Back-propagate `grad_probs` (dL/dprobs, row-major like the forward
/// output) to every weight and bias.
pub fn backward(params: &ModelParams, cache: &ForwardCache, grad_probs: &[f64]) -> Result<Vec<LayerGrad>> {
    let n_layers = params.layers.len();
    if cache.pre.len() != n_layers || cache.inputs.len() != n_layers {
        return Err(ModelError::MismatchedCache(format!(
            "cache has {} layers, model has {n_layers}",
            cache.pre.len()
        )));
    }
    for (k, (layer, z)) in params.layers.iter().zip(&cache.pre).enumerate() {
        if z.cols != layer.outputs || cache.inputs[k].cols != layer.inputs {
            return Err(ModelError::MismatchedCache(format!("layer {k} dims differ")));
        }
    }
    let probs = &cache.probs;
    if grad_probs.len() != probs.data.len() {
        return Err(ModelError::MismatchedCache(format!(
            "{} upstream gradients for {} outputs",
            grad_probs.len(),
            probs.data.len()
        )));
    }

    // dL/dz at the output layer
    let mut delta = match params.activation {
        Activation::ReluHiddenSigmoidOut => probs
            .data
            .iter()
            .zip(grad_probs)
            .map(|(p, g)| g * p * (1.0 - p))
            .collect::<Vec<f64>>(),
        Activation::ReluHiddenSoftmaxOut => {
            let mut d = vec![0.0; grad_probs.len()];
            for ((drow, prow), grow) in d
                .chunks_mut(probs.cols)
                .zip(probs.data.chunks(probs.cols))
                .zip(grad_probs.chunks(probs.cols))
            {
                let dot: f64 = prow.iter().zip(grow).map(|(p, g)| p * g).sum();
                for ((dv, p), g) in drow.iter_mut().zip(prow).zip(grow) {
                    *dv = p * (g - dot);
                }
            }
            d
        }
    };

    let mut grads = vec![
        LayerGrad {
            weights: Vec::new(),
            bias: Vec::new()
        };
        n_layers
    ];
    for k in (0..n_layers).rev() {
        let layer = &params.layers[k];
        let input = &cache.inputs[k];
        let rows = input.rows;
        let mut gw = vec![0.0; layer.weights.len()];
        let mut gb = vec![0.0; layer.outputs];
        for r in 0..rows {
            let xr = input.row(r);
            for o in 0..layer.outputs {
                let d = delta[r * layer.outputs + o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (gwi, xi) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(xr) {
                    *gwi += d * xi;
                }
            }
        }
        if k > 0 {
            let prev_pre = &cache.pre[k - 1];
            let mut next = vec![0.0; rows * layer.inputs];
            for r in 0..rows {
                for o in 0..layer.outputs {
                    let d = delta[r * layer.outputs + o];
                    if d == 0.0 {
                        continue;
                    }
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (i, wi) in w.iter().enumerate() {
                        next[r * layer.inputs + i] += d * wi;
                    }
                }
            }
            for (n, z) in next.iter_mut().zip(&prev_pre.data) {
                if *z <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
        grads[k] = LayerGrad { weights: gw, bias: gb };
    }
    Ok(grads)
}

/// Features, labels and group flags for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub z: Vec<Group>,
}

impl LabeledBatch {
    pub fn from_examples(examples: &[LabeledExample]) -> Result<Self> {
        let rows = examples
            .iter()
            .map(|e| {
                e.vector().ok_or_else(|| {
                    ModelError::Config(format!("example `{}` has no feature vector", e.id))
                })
            })
            .collect::<Result<Vec<&[f64]>>>()?;
        Ok(LabeledBatch {
            features: Matrix::from_rows(&rows)?,
            labels: examples.iter().map(|e| e.label).collect(),
            z: examples.iter().map(|e| e.z).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn select(&self, idx: &[usize]) -> LabeledBatch {
        LabeledBatch {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            z: idx.iter().map(|&i| self.z[i]).collect(),
        }
    }
}

fn prediction(probs: &Matrix, batch: &LabeledBatch) -> BatchPrediction {
    // Built without the open-interval check: saturated sigmoids may return
    // exactly 0 or 1, which the cross-entropy clamp already handles.
    BatchPrediction {
        probs: probs.data.clone(),
        width: probs.cols,
        labels: batch.labels.clone(),
        z: batch.z.clone(),
    }
}

/// Forward pass plus objective for one batch.
pub fn batch_objective(params: &ModelParams, batch: &LabeledBatch, weights: &LossWeights) -> Result<Objective> {
    let (probs, _) = forward(params, &batch.features)?;
    Ok(objective(&prediction(&probs, batch), weights)?)
}

/// Objective value and parameter gradients for one batch.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &LabeledBatch,
    weights: &LossWeights,
) -> Result<(Objective, Vec<LayerGrad>)> {
    let (probs, cache) = forward(params, &batch.features)?;
    let obj = objective(&prediction(&probs, batch), weights)?;
    let grads = backward(params, &cache, &obj.total.grad_probs)?;
    Ok((obj, grads))
}

/// Predicted class per row: threshold 0.5 for a sigmoid head, argmax
/// (lowest index on ties) for softmax.
pub fn predict(params: &ModelParams, features: &Matrix) -> Result<Vec<usize>> {
    let (probs, _) = forward(params, features)?;
    Ok(match params.activation {
        Activation::ReluHiddenSigmoidOut => probs.data.iter().map(|&p| usize::from(p >= 0.5)).collect(),
        Activation::ReluHiddenSoftmaxOut => probs
            .data
            .chunks(probs.cols)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                    .0
            })
            .collect(),
    })
}

/// Relative error with a 1e-4 denominator floor, so gradients near zero are
/// compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-6;

/// Largest relative error between backprop gradients and central finite
/// differences over every parameter.
///
/// Differences only approximate the gradient where the loss is smooth. A
/// hidden pre-activation of exactly zero is a ReLU kink; with zero biases this
/// happens when an input row leaves a whole earlier layer inactive.
pub fn gradient_check(params: &ModelParams, batch: &LabeledBatch, weights: &LossWeights) -> Result<f64> {
    let (_, grads) = loss_and_grads(params, batch, weights)?;
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
        .collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + FD_STEP;
        let plus = batch_objective(&probe, batch, weights)?.total.value;
        *probe.param_mut(i) = orig - FD_STEP;
        let minus = batch_objective(&probe, batch, weights)?.total.value;
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layer_dims: Vec<usize>,
    pub lambda: f64,
    #[serde(default)]
    pub spd_ideal: f64,
    /// Class treated as the positive prediction by the fairness penalty and
    /// the validation SPD.
    #[serde(default = "one")]
    pub positive_class: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

fn one() -> usize {
    1
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            spd_ideal: self.spd_ideal,
            positive_class: self.positive_class,
        }
    }

    pub fn validate(&self, train_len: usize) -> Result<()> {
        check_dims(&self.layer_dims)?;
        let bad = |m: String| Err(ModelError::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 || self.batch_size > train_len {
            return bad(format!(
                "batch size {} must be in 1..={train_len} (training-set size)",
                self.batch_size
            ));
        }
        Ok(())
    }

    /// Seed for the mini-batch shuffle of `epoch`.
    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(epoch as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full training-set objective after the epoch.
    pub train_loss: f64,
    pub train_ce: f64,
    /// λ times the training-set fairness penalty.
    pub train_fair: f64,
    pub val_accuracy: f64,
    /// Hard SPD of validation predictions; NaN when undefined.
    pub val_spd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let state = if kind == OptimizerKind::Adam { n_params } else { 0 };
        Optimizer {
            kind,
            lr,
            step: 0,
            m: vec![0.0; state],
            v: vec![0.0; state],
        }
    }

    fn apply(&mut self, params: &mut ModelParams, grads: &[LayerGrad]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let mut idx = 0;
        for (layer, g) in params.layers.iter_mut().zip(grads) {
            let pairs = layer
                .weights
                .iter_mut()
                .zip(&g.weights)
                .chain(layer.bias.iter_mut().zip(&g.bias));
            for (p, &gi) in pairs {
                match self.kind {
                    OptimizerKind::Sgd => *p -= self.lr * gi,
                    OptimizerKind::Adam => {
                        let m = &mut self.m[idx];
                        let v = &mut self.v[idx];
                        *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * gi;
                        *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * gi * gi;
                        *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                    }
                }
                idx += 1;
            }
        }
    }
}

/// Hard SPD and accuracy of `params` on `examples`.
pub fn evaluate(params: &ModelParams, batch: &LabeledBatch, positive_class: usize) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let preds = predict(params, &batch.features)?;
    let records = prediction_records(&preds, batch, None);
    let acc = preds.iter().zip(&batch.labels).filter(|(p, y)| p == y).count() as f64 / batch.len() as f64;
    let spd = PredictionLog::new(records, params.num_classes())
        .and_then(|log| metrics::statistical_parity_difference(&log, positive_class))
        .unwrap_or(f64::NAN);
    Ok((acc, spd))
}

/// Pair predictions with their batch's truth and groups. Ids are row indices
/// unless `ids` is given.
pub fn prediction_records(preds: &[usize], batch: &LabeledBatch, ids: Option<&[String]>) -> Vec<PredictionRecord> {
    preds
        .iter()
        .enumerate()
        .map(|(i, &p)| PredictionRecord {
            id: ids.map_or_else(|| i.to_string(), |ids| ids[i].clone()),
            y_true: batch.labels[i],
            y_pred: p,
            score: None,
            z: batch.z[i],
        })
        .collect()
}

/// Train from seeded initialization on `splits.train`, recording one history
/// entry per epoch.
pub fn train(splits: &SplitSet, config: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    let train_set = LabeledBatch::from_examples(&splits.train)?;
    let val_set = LabeledBatch::from_examples(&splits.val)?;
    train_batches(&train_set, &val_set, config)
}

/// [`train`] over pre-assembled feature matrices.
pub fn train_batches(
    train_set: &LabeledBatch,
    val_set: &LabeledBatch,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate(train_set.len())?;
    let mut params = init_params(&config.layer_dims, config.seed)?;
    if train_set.features.cols != params.input_dim() {
        return Err(ModelError::Shape(format!(
            "features have {} columns, first layer expects {}",
            train_set.features.cols,
            params.input_dim()
        )));
    }
    let classes = params.num_classes();
    if let Some(&bad) = train_set.labels.iter().chain(&val_set.labels).find(|&&l| l >= classes) {
        return Err(ModelError::Shape(format!("label {bad} exceeds the {classes}-class output")));
    }
    let weights = config.loss_weights();
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, params.num_params());
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        for (b, idx) in minibatches(train_set.len(), config.batch_size, config.epoch_seed(epoch))
            .iter()
            .enumerate()
        {
            let batch = train_set.select(idx);
            let (obj, grads) = loss_and_grads(&params, &batch, &weights)?;
            if !obj.total.value.is_finite() || obj.total.grad_probs.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            opt.apply(&mut params, &grads);
        }
        let full = batch_objective(&params, train_set, &weights)?;
        if !full.total.value.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        let (val_accuracy, val_spd) = evaluate(&params, val_set, config.positive_class)?;
        log::debug!(
            "epoch {epoch}: loss {:.6} val acc {val_accuracy:.4} val spd {val_spd:.4}",
            full.total.value
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: full.total.value,
            train_ce: full.cross_entropy,
            train_fair: weights.lambda * full.fairness,
            val_accuracy,
            val_spd,
        });
    }
    Ok((params, history))
}

// ---------------------------------------------------------------------------
// Checkpoints

const MAGIC: &[u8; 8] = b"FSKCKPT\0";
const VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_sha256: [u8; 32],
}

pub fn encode_checkpoint(params: &ModelParams, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match params.activation {
        Activation::ReluHiddenSigmoidOut => 0,
        Activation::ReluHiddenSoftmaxOut => 1,
    });
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&meta.config_sha256);
    let dims = params.dims();
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for l in &params.layers {
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, CheckpointMeta)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let activation = match cur.take(4)?[0] {
        0 => Activation::ReluHiddenSigmoidOut,
        1 => Activation::ReluHiddenSoftmaxOut,
        t => return Err(ModelError::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let seed = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
    let config_sha256: [u8; 32] = cur.take(32)?.try_into().expect("32 bytes");
    let n_dims = cur.u32()? as usize;
    if n_dims > 1 << 16 {
        return Err(ModelError::Checkpoint(format!("implausible dim count {n_dims}")));
    }
    let dims = (0..n_dims).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let mut params = ModelParams::zeros(&dims).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    params.activation = activation;
    for l in &mut params.layers {
        for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *v = f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if cur.pos != bytes.len() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    params.validate().map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    Ok((params, CheckpointMeta { seed, config_sha256 }))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| ModelError::Checkpoint("truncated".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<()> {
    fs::write(path, encode_checkpoint(params, meta)).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
