//! Multi-layer perceptron for binary classification.
//!
//! ReLU hidden layers feed a single sigmoid output trained on binary
//! cross-entropy with Adam. Inputs are z-scored with training statistics,
//! which the fitted model carries along.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, ModelError};
use crate::label::Label;
use crate::seed;

pub const HIDDEN_GRID: [&[usize]; 3] = [&[50], &[10, 50, 10], &[10, 50, 50, 10]];
pub const LEARNING_RATE_GRID: [f64; 2] = [1e-2, 1e-3];

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// `lr0 / sqrt(epoch)`, epochs counted from 1.
    #[serde(rename = "invscaling")]
    InvScaling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub schedule: LrSchedule,
    pub learning_rate: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_epochs() -> usize {
    500
}
fn default_batch_size() -> usize {
    32
}
fn default_patience() -> usize {
    20
}
fn default_tol() -> f64 {
    1e-4
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50],
            schedule: LrSchedule::Constant,
            learning_rate: 1e-3,
            max_epochs: default_max_epochs(),
            batch_size: default_batch_size(),
            patience: default_patience(),
            tol: default_tol(),
            seed: 0,
        }
    }
}

impl MlpConfig {
    /// Checks the architecture and learning rate against the search grid.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !HIDDEN_GRID.contains(&self.hidden.as_slice()) {
            return Err(ModelError::Config(format!(
                "hidden layers {:?} are not in {HIDDEN_GRID:?}",
                self.hidden
            )));
        }
        if !LEARNING_RATE_GRID.contains(&self.learning_rate) {
            return Err(ModelError::Config(format!(
                "learning rate {} is not in {LEARNING_RATE_GRID:?}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn n_parameters(&self, n_inputs: usize) -> usize {
        layer_sizes(n_inputs, &self.hidden).windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
}

fn layer_sizes(n_inputs: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![n_inputs];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of a logit against a 0/1 target, stable for large |z|.
fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Weights of a fully connected net; each layer stores its `out x in`
/// weight matrix row-major followed by `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(n_inputs: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = layer_sizes(n_inputs, hidden);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes, params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<(), ModelError> {
        if params.len() != self.params.len() {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    /// Forward pass over `n` rows; returns the activations of every layer,
    /// the last one holding logits.
    fn forward(&self, x: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut offset = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (d_in, d_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + d_in * d_out];
            let bias = &self.params[offset + d_in * d_out..offset + (d_in + 1) * d_out];
            offset += (d_in + 1) * d_out;
            let prev = &acts[l];
            let mut out = vec![0.0; n * d_out];
            for r in 0..n {
                let a = &prev[r * d_in..(r + 1) * d_in];
                for o in 0..d_out {
                    let wrow = &weights[o * d_in..(o + 1) * d_in];
                    let z = bias[o] + wrow.iter().zip(a).map(|(w, a)| w * a).sum::<f64>();
                    out[r * d_out + o] = if l == last { z } else { z.max(0.0) };
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Mean cross-entropy over `n` rows of `x` (row-major) with 0/1 targets.
    pub fn loss(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = y.len();
        let logits = self.forward(x, n).pop().expect("output layer");
        logits.iter().zip(y).map(|(&z, &t)| bce_logit(z, t)).sum::<f64>() / n as f64
    }

    /// Gradient of [`Network::loss`] with respect to [`Network::parameters`].
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.loss_and_gradient(x, y).1
    }

    pub fn loss_and_gradient(&self, x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
        let n = y.len();
        let acts = self.forward(x, n);
        let logits = acts.last().expect("output layer");
        let loss = logits.iter().zip(y).map(|(&z, &t)| bce_logit(z, t)).sum::<f64>() / n as f64;

        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Vec<f64> = logits.iter().zip(y).map(|(&z, &t)| (sigmoid(z) - t) / n as f64).collect();
        let mut offset = self.params.len();
        for l in (0..self.sizes.len() - 1).rev() {
            let (d_in, d_out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= (d_in + 1) * d_out;
            let weights = &self.params[offset..offset + d_in * d_out];
            let prev = &acts[l];
            let (gw, gb) = grad[offset..offset + (d_in + 1) * d_out].split_at_mut(d_in * d_out);
            for r in 0..n {
                let a = &prev[r * d_in..(r + 1) * d_in];
                for o in 0..d_out {
                    let d = delta[r * d_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &ai) in gw[o * d_in..(o + 1) * d_in].iter_mut().zip(a) {
                        *g += d * ai;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut next = vec![0.0; n * d_in];
            for r in 0..n {
                for o in 0..d_out {
                    let d = delta[r * d_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    for (nx, &w) in next[r * d_in..(r + 1) * d_in].iter_mut().zip(&weights[o * d_in..(o + 1) * d_in]) {
                        *nx += d * w;
                    }
                }
            }
            for (nx, &a) in next.iter_mut().zip(prev) {
                if a <= 0.0 {
                    *nx = 0.0;
                }
            }
            delta = next;
        }
        (loss, grad)
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() / self.n_inputs().max(1);
        self.forward(x, n).pop().expect("output layer").into_iter().map(sigmoid).collect()
    }
}

/// Per-column z-score constants; zero spread maps to unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.n_rows() as f64;
        let mut mean = vec![0.0; x.n_cols()];
        let mut scale = vec![0.0; x.n_cols()];
        for j in 0..x.n_cols() {
            let m = (0..x.n_rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
            let var = (0..x.n_rows()).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn transform(&self, x: &Matrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.n_rows() * x.n_cols());
        for i in 0..x.n_rows() {
            out.extend(x.row(i).iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    pub standardizer: Standardizer,
    pub network: Network,
    pub epochs_run: usize,
    pub final_loss: f64,
}

impl Mlp {
    pub fn fit(x: &Matrix, y: &[Label], config: &MlpConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Self::fit_unchecked(x, y, config)
    }

    /// Like [`Mlp::fit`] but accepts architectures outside the search grid.
    pub fn fit_unchecked(x: &Matrix, y: &[Label], config: &MlpConfig) -> Result<Self, ModelError> {
        let n = x.n_rows();
        if n != y.len() {
            return Err(ModelError::Shape(format!("{n} rows but {} labels", y.len())));
        }
        if n == 0 {
            return Err(ModelError::TooFewRows(n));
        }
        let mut rng = seed::rng_from(config.seed);
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.transform(x);
        let target: Vec<f64> = y.iter().map(|l| l.as_target()).collect();
        let d = x.n_cols();
        let mut network = Network::init(d, &config.hidden, &mut rng);

        let n_params = network.params.len();
        let (mut m, mut v) = (vec![0.0; n_params], vec![0.0; n_params]);
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..n).collect();
        let (mut bx, mut by) = (Vec::new(), Vec::new());
        let mut best = f64::INFINITY;
        let mut stale = 0;
        let mut epochs_run = 0;
        let mut final_loss = f64::NAN;

        for epoch in 1..=config.max_epochs {
            let lr = match config.schedule {
                LrSchedule::Constant => config.learning_rate,
                LrSchedule::InvScaling => config.learning_rate / (epoch as f64).sqrt(),
            };
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(config.batch_size) {
                bx.clear();
                by.clear();
                for &i in batch {
                    bx.extend_from_slice(&xs[i * d..(i + 1) * d]);
                    by.push(target[i]);
                }
                let (loss, grad) = network.loss_and_gradient(&bx, &by);
                if !loss.is_finite() {
                    return Err(ModelError::NonFiniteLoss { learning_rate: lr, epoch });
                }
                total += loss * batch.len() as f64;
                step += 1;
                let c1 = 1.0 - BETA1.powi(step);
                let c2 = 1.0 - BETA2.powi(step);
                for k in 0..n_params {
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * grad[k];
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * grad[k] * grad[k];
                    network.params[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPSILON);
                }
            }
            let epoch_loss = total / n as f64;
            epochs_run = epoch;
            final_loss = epoch_loss;
            if epoch_loss < best - config.tol {
                best = epoch_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
        if epochs_run == 0 {
            final_loss = network.loss(&xs, &target);
        }
        Ok(Self { config: config.clone(), standardizer, network, epochs_run, final_loss })
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.network.predict(&self.standardizer.transform(x))
    }
}
