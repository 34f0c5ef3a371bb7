//! Linear propagation baseline: `k` steps of symmetric-normalized feature
//! smoothing followed by multinomial logistic regression trained with
//! full-batch gradient descent and early stopping on ValidIn loss.
//! Softmax entropy of its predictions serves as the uncertainty score.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeFeatures, NodeLabels};
use crate::split::{SplitAssignment, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Number of multiplications by `D^-1/2 (A + I) D^-1/2`.
    pub k: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig { k: 2 }
    }
}

/// Returns `S^k X` with `S = D^-1/2 (A + I) D^-1/2`, `D` the degree matrix
/// of `A + I`.
pub fn propagate_features(
    graph: &Graph,
    features: &NodeFeatures,
    config: &PropagationConfig,
) -> Result<NodeFeatures> {
    if features.num_nodes() != graph.num_nodes() {
        return Err(Error::NodeCountMismatch {
            expected: graph.num_nodes(),
            found: features.num_nodes(),
        });
    }
    let n = graph.num_nodes();
    let dim = features.dim();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((graph.degree(i) + 1) as f64).sqrt())
        .collect();

    let mut current = features.clone();
    for _ in 0..config.k {
        let mut data = vec![0.0; n * dim];
        if dim > 0 {
            data.par_chunks_mut(dim).enumerate().for_each(|(i, out)| {
                let self_weight = inv_sqrt[i] * inv_sqrt[i];
                for (o, x) in out.iter_mut().zip(current.row(i)) {
                    *o = self_weight * x;
                }
                for &j in graph.neighbors(i) {
                    let j = j as usize;
                    let w = inv_sqrt[i] * inv_sqrt[j];
                    for (o, x) in out.iter_mut().zip(current.row(j)) {
                        *o += w * x;
                    }
                }
            });
        }
        current = NodeFeatures::new(n, dim, data);
    }
    Ok(current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without a new best ValidIn loss before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5.0,
            weight_decay: 1e-5,
            max_epochs: 1000,
            patience: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience must lie in 1..={}, got {}",
                self.max_epochs, self.patience
            )));
        }
        Ok(())
    }
}

/// Weights (`dim x num_classes`, row-major) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub dim: usize,
    pub num_classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Parameters {
    pub fn zeros(dim: usize, num_classes: usize) -> Self {
        Parameters {
            dim,
            num_classes,
            weights: vec![0.0; dim * num_classes],
            bias: vec![0.0; num_classes],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (dim + num_classes) as f64).sqrt();
        let weights = (0..dim * num_classes)
            .map(|_| {
                let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                (2.0 * unit - 1.0) * limit
            })
            .collect();
        Parameters {
            dim,
            num_classes,
            weights,
            bias: vec![0.0; num_classes],
        }
    }

    pub fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (f, &xf) in x.iter().enumerate() {
            if xf != 0.0 {
                let row = &self.weights[f * self.num_classes..(f + 1) * self.num_classes];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xf * w;
                }
            }
        }
    }

    /// Flattened view used by gradient checks: weights then biases.
    pub fn to_vec(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn from_vec(dim: usize, num_classes: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), dim * num_classes + num_classes);
        Parameters {
            dim,
            num_classes,
            weights: v[..dim * num_classes].to_vec(),
            bias: v[dim * num_classes..].to_vec(),
        }
    }
}

/// Mean cross-entropy over `nodes` plus `weight_decay / 2 * ||W||^2`.
pub struct Objective<'a> {
    pub features: &'a NodeFeatures,
    pub labels: &'a NodeLabels,
    pub nodes: &'a [usize],
    pub weight_decay: f64,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl Objective<'_> {
    fn penalty(&self, params: &Parameters) -> f64 {
        0.5 * self.weight_decay * params.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn loss(&self, params: &Parameters) -> f64 {
        let mut z = vec![0.0; params.num_classes];
        let mut total = 0.0;
        for &i in self.nodes {
            params.logits_into(self.features.row(i), &mut z);
            total += log_sum_exp(&z) - z[self.labels.get(i)];
        }
        total / self.nodes.len() as f64 + self.penalty(params)
    }

    pub fn loss_and_gradient(&self, params: &Parameters) -> (f64, Parameters) {
        let c = params.num_classes;
        let m = self.nodes.len() as f64;
        let mut grad = Parameters::zeros(params.dim, c);
        let mut z = vec![0.0; c];
        let mut total = 0.0;
        for &i in self.nodes {
            let x = self.features.row(i);
            params.logits_into(x, &mut z);
            let lse = log_sum_exp(&z);
            let y = self.labels.get(i);
            total += lse - z[y];
            // z becomes (softmax - onehot) / m
            for (k, v) in z.iter_mut().enumerate() {
                let p = (*v - lse).exp();
                *v = (p - if k == y { 1.0 } else { 0.0 }) / m;
            }
            for (g, d) in grad.bias.iter_mut().zip(&z) {
                *g += d;
            }
            for (f, &xf) in x.iter().enumerate() {
                if xf != 0.0 {
                    let row = &mut grad.weights[f * c..(f + 1) * c];
                    for (g, d) in row.iter_mut().zip(&z) {
                        *g += xf * d;
                    }
                }
            }
        }
        for (g, w) in grad.weights.iter_mut().zip(&params.weights) {
            *g += self.weight_decay * w;
        }
        (total / m + self.penalty(params), grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub params: Parameters,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub train_config: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub propagation: Option<PropagationConfig>,
    /// Preprocessing applied before propagation, e.g. `l2-rows`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature_normalization: Option<String>,
    pub training_log: Vec<EpochLog>,
}

impl ClassifierModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Feature rows and labels of one subset, zero-padded for the dense kernels.
struct Block {
    labels: Vec<usize>,
    x: Vec<f64>,
    height: usize,
    width: usize,
}

impl Block {
    fn gather(features: &NodeFeatures, labels: &NodeLabels, nodes: &[usize]) -> Self {
        let (height, width) = (dense::padded(nodes.len()), dense::padded(features.dim()));
        let mut x = vec![0.0; height * width];
        for (r, &i) in nodes.iter().enumerate() {
            x[r * width..r * width + features.dim()].copy_from_slice(features.row(i));
        }
        Block {
            labels: nodes.iter().map(|&i| labels.get(i)).collect(),
            x,
            height,
            width,
        }
    }

    /// Mean cross-entropy of `z + bias` and, if asked, the residual
    /// `(softmax - onehot) / m` in the padded layout of `z`.
    fn cross_entropy(
        &self,
        z: &[f64],
        bias: &[f64],
        stride: usize,
        residual: bool,
    ) -> (f64, Vec<f64>) {
        let m = self.labels.len() as f64;
        let mut out = if residual {
            vec![0.0; z.len()]
        } else {
            Vec::new()
        };
        let mut logits = vec![0.0; bias.len()];
        let mut total = 0.0;
        for (i, &y) in self.labels.iter().enumerate() {
            for (k, l) in logits.iter_mut().enumerate() {
                *l = z[i * stride + k] + bias[k];
            }
            let lse = log_sum_exp(&logits);
            total += lse - logits[y];
            if residual {
                for (k, &l) in logits.iter().enumerate() {
                    let onehot = if k == y { 1.0 } else { 0.0 };
                    out[i * stride + k] = ((l - lse).exp() - onehot) / m;
                }
            }
        }
        (total / m, out)
    }
}

/// Weight state saved at the best epoch.
#[derive(Clone)]
struct Snapshot {
    state: Vec<f64>,
    scale: f64,
}

enum Form {
    /// The weights themselves (`width x stride`).
    Primal,
    /// Weights written as `scale * W0 + X^T A` with `A` of shape
    /// `height x stride`. Gradient descent stays inside this form, and each
    /// epoch costs `O(m^2)` instead of `O(m * dim)`.
    Dual {
        gram: Vec<f64>,
        cross: Vec<f64>,
        xw0: Vec<f64>,
        xvw0: Vec<f64>,
        w0_norm2: f64,
    },
}

struct Basis<'a> {
    train: &'a Block,
    valid: &'a Block,
    stride: usize,
    xt: Vec<f64>,
    w0: Vec<f64>,
    form: Form,
    state: Vec<f64>,
    scale: f64,
    scratch: Vec<f64>,
}

impl<'a> Basis<'a> {
    fn new(train: &'a Block, valid: &'a Block, init: &Parameters) -> Self {
        let stride = dense::padded(init.num_classes);
        let (m, mv, d) = (train.height, valid.height, train.width);
        let mut w0 = vec![0.0; d * stride];
        for f in 0..init.dim {
            w0[f * stride..f * stride + init.num_classes]
                .copy_from_slice(&init.weights[f * init.num_classes..(f + 1) * init.num_classes]);
        }
        let xt = dense::transpose(&train.x, m, d);
        let product = |a: &[f64], k: usize, b: &[f64], s: usize| {
            let mut out = vec![0.0; a.len() / k * s];
            dense::matmul(a, k, b, s, &mut out);
            out
        };
        if (m + mv) * m < (2 * m + mv) * d {
            let form = Form::Dual {
                gram: product(&train.x, d, &xt, m),
                cross: product(&valid.x, d, &xt, m),
                xw0: product(&train.x, d, &w0, stride),
                xvw0: product(&valid.x, d, &w0, stride),
                w0_norm2: dense::dot(&w0, &w0),
            };
            Basis {
                train,
                valid,
                stride,
                xt,
                w0,
                form,
                state: vec![0.0; m * stride],
                scale: 1.0,
                scratch: Vec::new(),
            }
        } else {
            Basis {
                train,
                valid,
                stride,
                xt,
                state: w0.clone(),
                w0,
                form: Form::Primal,
                scale: 1.0,
                scratch: vec![0.0; d * stride],
            }
        }
    }

    /// Writes the training logits (without bias) and returns `||W||^2`.
    fn train_logits(&self, z: &mut [f64]) -> f64 {
        match &self.form {
            Form::Primal => {
                dense::matmul(&self.train.x, self.train.width, &self.state, self.stride, z);
                dense::dot(&self.state, &self.state)
            }
            Form::Dual {
                gram,
                xw0,
                w0_norm2,
                ..
            } => {
                dense::matmul(gram, self.train.height, &self.state, self.stride, z);
                let a_ka = dense::dot(&self.state, z);
                let cross = dense::dot(xw0, &self.state);
                for (v, w) in z.iter_mut().zip(xw0) {
                    *v += self.scale * w;
                }
                self.scale * self.scale * w0_norm2 + 2.0 * self.scale * cross + a_ka
            }
        }
    }

    fn valid_logits(&self, z: &mut [f64]) {
        match &self.form {
            Form::Primal => {
                dense::matmul(&self.valid.x, self.valid.width, &self.state, self.stride, z)
            }
            Form::Dual { cross, xvw0, .. } => {
                dense::matmul(cross, self.train.height, &self.state, self.stride, z);
                for (v, w) in z.iter_mut().zip(xvw0) {
                    *v += self.scale * w;
                }
            }
        }
    }

    /// One gradient step given the training residual.
    fn step(&mut self, residual: &[f64], learning_rate: f64, weight_decay: f64) {
        match &self.form {
            Form::Primal => {
                dense::matmul(
                    &self.xt,
                    self.train.height,
                    residual,
                    self.stride,
                    &mut self.scratch,
                );
                for (w, g) in self.state.iter_mut().zip(&self.scratch) {
                    *w -= learning_rate * (g + weight_decay * *w);
                }
            }
            Form::Dual { .. } => {
                let shrink = 1.0 - learning_rate * weight_decay;
                for (a, r) in self.state.iter_mut().zip(residual) {
                    *a = shrink * *a - learning_rate * r;
                }
                self.scale *= shrink;
            }
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            state: self.state.clone(),
            scale: self.scale,
        }
    }

    fn parameters(&self, snapshot: &Snapshot, bias: Vec<f64>, init: &Parameters) -> Parameters {
        let padded = match self.form {
            Form::Primal => snapshot.state.clone(),
            Form::Dual { .. } => {
                let mut w = vec![0.0; self.w0.len()];
                dense::matmul(
                    &self.xt,
                    self.train.height,
                    &snapshot.state,
                    self.stride,
                    &mut w,
                );
                for (v, w0) in w.iter_mut().zip(&self.w0) {
                    *v += snapshot.scale * w0;
                }
                w
            }
        };
        let c = init.num_classes;
        let mut weights = vec![0.0; init.dim * c];
        for f in 0..init.dim {
            weights[f * c..(f + 1) * c]
                .copy_from_slice(&padded[f * self.stride..f * self.stride + c]);
        }
        Parameters {
            dim: init.dim,
            num_classes: c,
            weights,
            bias,
        }
    }
}

/// Trains on the Train subset, keeping the parameters with the lowest
/// ValidIn cross-entropy. Training stops after `patience` epochs without
/// improvement.
pub fn train(
    features: &NodeFeatures,
    labels: &NodeLabels,
    split: &SplitAssignment,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    config.validate()?;
    if features.num_nodes() != split.num_nodes() || labels.len() != split.num_nodes() {
        return Err(Error::NodeCountMismatch {
            expected: split.num_nodes(),
            found: if labels.len() != split.num_nodes() {
                labels.len()
            } else {
                features.num_nodes()
            },
        });
    }
    let train_nodes = split.nodes(Subset::Train);
    let valid_nodes = split.nodes(Subset::ValidIn);
    if train_nodes.is_empty() {
        return Err(Error::EmptySet("Train subset".into()));
    }
    if valid_nodes.is_empty() {
        return Err(Error::EmptySet("ValidIn subset".into()));
    }

    let train_set = Block::gather(features, labels, &train_nodes);
    let valid_set = Block::gather(features, labels, &valid_nodes);
    let init = Parameters::glorot(features.dim(), labels.num_classes(), config.seed);
    let mut basis = Basis::new(&train_set, &valid_set, &init);
    let mut bias = vec![0.0; labels.num_classes()];

    let mut log = Vec::new();
    let mut best: Option<(usize, f64, Snapshot, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut z = vec![0.0; train_set.height * basis.stride];
    let mut zv = vec![0.0; valid_set.height * basis.stride];

    for epoch in 0..config.max_epochs {
        let norm2 = basis.train_logits(&mut z);
        let (train_ce, residual) = train_set.cross_entropy(&z, &bias, basis.stride, true);
        let train_loss = train_ce + 0.5 * config.weight_decay * norm2;
        basis.valid_logits(&mut zv);
        let (valid_loss, _) = valid_set.cross_entropy(&zv, &bias, basis.stride, false);
        if !train_loss.is_finite() || !valid_loss.is_finite() {
            let loss = if train_loss.is_finite() {
                valid_loss
            } else {
                train_loss
            };
            return Err(Error::Divergence { epoch, loss });
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
        });
        if best.as_ref().is_none_or(|(_, b, _, _)| valid_loss < *b) {
            best = Some((epoch, valid_loss, basis.snapshot(), bias.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
        for (k, b) in bias.iter_mut().enumerate() {
            let g: f64 = (0..train_set.labels.len())
                .map(|i| residual[i * basis.stride + k])
                .sum();
            *b -= config.learning_rate * g;
        }
        basis.step(&residual, config.learning_rate, config.weight_decay);
    }

    let (best_epoch, best_valid_loss, state, bias) = best.expect("at least one epoch ran");
    let params = basis.parameters(&state, bias, &init);
    Ok(ClassifierModel {
        params,
        best_epoch,
        best_valid_loss,
        train_config: *config,
        propagation: None,
        feature_normalization: None,
        training_log: log,
    })
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Class distributions for every node.
pub fn predict_proba(model: &ClassifierModel, features: &NodeFeatures) -> Result<Vec<Vec<f64>>> {
    if features.dim() != model.params.dim {
        return Err(Error::DimensionMismatch {
            expected: model.params.dim,
            found: features.dim(),
        });
    }
    let mut z = vec![0.0; model.params.num_classes];
    Ok((0..features.num_nodes())
        .map(|i| {
            model.params.logits_into(features.row(i), &mut z);
            softmax(&z)
        })
        .collect())
}

/// Shannon entropy in nats, with `0 * ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    // -0.0 for a one-hot row would otherwise leak through.
    0.0 - p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub fn softmax_entropy(proba: &[Vec<f64>]) -> Vec<f64> {
    proba.iter().map(|p| entropy(p)).collect()
}

/// Index of the most probable class, the smallest index among ties.
pub fn predict_classes(proba: &[Vec<f64>]) -> Vec<usize> {
    proba
        .iter()
        .map(|p| {
            let mut best = 0;
            for (k, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
