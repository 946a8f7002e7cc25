//! Parameter storage, training and the serialized model file.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Layer, ModelArchitecture};
use super::encoder::InputEncoder;
use super::network;
use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::grad::backprop::{bce_from_logit, instance_bce_grad};
use crate::grad::hessian::dense_hessian_rows;
use crate::grad::scalar::sigmoid;
use crate::util;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Flat θ plus the layer-to-slice layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub layout: Vec<ParameterBlock>,
}

impl ParameterVector {
    pub fn new(arch: &ModelArchitecture, values: Vec<f64>) -> Result<Self> {
        let count = arch.parameter_count();
        if values.len() != count {
            return Err(Error::Config(format!(
                "{} parameters given, architecture `{}` has {count}",
                values.len(),
                arch.name()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("parameter {i} is not finite")));
        }
        Ok(ParameterVector {
            values,
            layout: Self::layout_of(arch),
        })
    }

    pub fn zeros(arch: &ModelArchitecture) -> Self {
        ParameterVector {
            values: vec![0.0; arch.parameter_count()],
            layout: Self::layout_of(arch),
        }
    }

    fn layout_of(arch: &ModelArchitecture) -> Vec<ParameterBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (l, layer) in arch.layers().iter().enumerate() {
            let (weights, biases) = match *layer {
                Layer::Dense { input, output, .. } => (input * output, output),
                Layer::Conv1d { channels, kernel, .. } => (channels * kernel, channels),
            };
            blocks.push(ParameterBlock {
                name: format!("layer{l}.weight"),
                offset,
                len: weights,
            });
            offset += weights;
            blocks.push(ParameterBlock {
                name: format!("layer{l}.bias"),
                offset,
                len: biases,
            });
            offset += biases;
        }
        blocks
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.offset..b.offset + b.len])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    GradientDescent,
    Adam,
    /// Damped Newton with backtracking on the full-batch objective. Meant for
    /// small models where tight convergence matters (retraining oracles).
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    /// Stop once the full-batch gradient norm falls to this value.
    pub tolerance: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            l2: 1e-3,
            seed: 1,
            tolerance: 1e-6,
        }
    }
}

impl TrainingConfig {
    /// Newton settings that drive a convex model to machine-level optimality.
    pub fn newton(l2: f64, seed: u64) -> Self {
        TrainingConfig {
            optimizer: Optimizer::Newton,
            learning_rate: 1.0,
            epochs: 100,
            batch_size: 0,
            l2,
            seed,
            tolerance: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::Config("l2 weight must be >= 0".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub final_gradient_norm: f64,
    pub converged: bool,
    /// Full-batch objective after each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub architecture: ModelArchitecture,
    pub parameters: ParameterVector,
    /// Standardization statistics from the training split.
    pub encoder: InputEncoder,
    pub training: TrainingConfig,
    pub schema_hash: String,
    pub training_log: TrainingLog,
}

impl TrainedModel {
    /// Wraps hand-set parameters, e.g. for closed-form checks.
    pub fn from_parameters(
        architecture: ModelArchitecture,
        values: Vec<f64>,
        encoder: InputEncoder,
        l2: f64,
        schema_hash: impl Into<String>,
    ) -> Result<Self> {
        architecture.validate()?;
        if architecture.input_width() != encoder.width {
            return Err(Error::Config(format!(
                "architecture input width {} does not match encoder width {}",
                architecture.input_width(),
                encoder.width
            )));
        }
        let parameters = ParameterVector::new(&architecture, values)?;
        Ok(TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            architecture,
            parameters,
            encoder,
            training: TrainingConfig {
                l2,
                ..TrainingConfig::default()
            },
            schema_hash: schema_hash.into(),
            training_log: TrainingLog {
                epochs_run: 0,
                final_loss: f64::NAN,
                final_gradient_norm: f64::NAN,
                converged: false,
                loss_history: Vec::new(),
            },
        })
    }

    pub fn layers(&self) -> Vec<Layer> {
        self.architecture.layers()
    }

    pub fn l2(&self) -> f64 {
        self.training.l2
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters.len()
    }

    pub fn encode(&self, x: &Instance) -> Result<Vec<f64>> {
        self.encoder.encode_instance(x)
    }

    pub fn logit_encoded(&self, x: &[f64]) -> f64 {
        network::logit(&self.layers(), &self.parameters.values, x)
    }

    pub fn proba_encoded(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit_encoded(x))
    }

    pub fn logit(&self, x: &Instance) -> Result<f64> {
        Ok(self.logit_encoded(&self.encode(x)?))
    }

    /// Probability of the positive label (remain intubated).
    pub fn predict_proba(&self, x: &Instance) -> Result<f64> {
        Ok(self.proba_encoded(&self.encode(x)?))
    }

    /// Clamped cross-entropy plus `l2 / 2 * |θ|²`.
    pub fn loss_encoded(&self, x: &[f64], label: u8) -> f64 {
        let (bce, _) = bce_from_logit(self.logit_encoded(x), label);
        bce + 0.5 * self.l2() * util::dot(&self.parameters.values, &self.parameters.values)
    }

    pub fn loss(&self, x: &Instance) -> Result<f64> {
        Ok(self.loss_encoded(&self.encode(x)?, x.label))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: TrainedModel = serde_json::from_slice(bytes)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported",
                m.format_version
            )));
        }
        m.architecture.validate()?;
        ParameterVector::new(&m.architecture, m.parameters.values.clone())?;
        Ok(m)
    }

    pub fn content_hash(&self) -> String {
        util::canonical_hash(self)
    }
}

/// Encoded training rows.
#[derive(Debug, Clone)]
pub(crate) struct EncodedSet {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl EncodedSet {
    pub fn train(encoder: &InputEncoder, ds: &Dataset) -> Result<Self> {
        Self::from_instances(encoder, ds.train())
    }

    pub fn from_instances<'a>(encoder: &InputEncoder, it: impl Iterator<Item = &'a Instance>) -> Result<Self> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for inst in it {
            rows.push(encoder.encode_instance(inst)?);
            labels.push(inst.label);
        }
        Ok(EncodedSet { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

/// Mean objective `(1/n) Σ L(z_i)` and its gradient over the given rows.
pub(crate) fn objective(layers: &[Layer], params: &[f64], set: &EncodedSet, idx: &[usize], l2: f64) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = vec![0.0; params.len()];
    for &i in idx {
        let (loss, g) = instance_bce_grad(layers, params, &set.rows[i], set.labels[i]);
        total += loss;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = idx.len() as f64;
    for (a, p) in grad.iter_mut().zip(params) {
        *a = *a / n + l2 * p;
    }
    (total / n + 0.5 * l2 * util::dot(params, params), grad)
}

fn objective_value(layers: &[Layer], params: &[f64], set: &EncodedSet, l2: f64) -> f64 {
    let total: f64 = set
        .rows
        .iter()
        .zip(&set.labels)
        .map(|(x, &y)| bce_from_logit(network::logit(layers, params, x), y).0)
        .sum();
    total / set.len() as f64 + 0.5 * l2 * util::dot(params, params)
}

fn initial_parameters(layers: &[Layer], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut values = Vec::new();
    for layer in layers {
        let r = 1.0 / (layer.fan_in() as f64).sqrt();
        for _ in 0..layer.parameter_count() {
            values.push(rng.random_range(-r..r));
        }
    }
    values
}

/// Fits the encoder on the training split, then trains.
pub fn train(ds: &Dataset, arch: &ModelArchitecture, cfg: &TrainingConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let encoder = InputEncoder::fit(ds)?;
    train_with_encoder(ds, arch, cfg, encoder)
}

/// Trains with fixed standardization statistics.
pub fn train_with_encoder(
    ds: &Dataset,
    arch: &ModelArchitecture,
    cfg: &TrainingConfig,
    encoder: InputEncoder,
) -> Result<TrainedModel> {
    cfg.validate()?;
    arch.validate()?;
    if arch.input_width() != encoder.width {
        return Err(Error::Config(format!(
            "architecture input width {} does not match encoded width {}",
            arch.input_width(),
            encoder.width
        )));
    }
    let set = EncodedSet::train(&encoder, ds)?;
    if set.len() == 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    let layers = arch.layers();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = initial_parameters(&layers, &mut rng);
    let log = match cfg.optimizer {
        Optimizer::Newton => run_newton(&layers, &mut params, &set, cfg)?,
        _ => run_first_order(&layers, &mut params, &set, cfg, &mut rng)?,
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        parameters: ParameterVector::new(arch, params)?,
        architecture: arch.clone(),
        encoder,
        training: cfg.clone(),
        schema_hash: ds.schema.content_hash(),
        training_log: log,
    })
}

fn check_finite(loss: f64, grad: &[f64], epoch: usize) -> Result<()> {
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { epoch });
    }
    Ok(())
}

fn run_first_order(
    layers: &[Layer],
    params: &mut [f64],
    set: &EncodedSet,
    cfg: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingLog> {
    let n = set.len();
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut history = Vec::with_capacity(cfg.epochs);
    let (mut loss, mut grad) = objective(layers, params, set, &order, cfg.l2);
    check_finite(loss, &grad, 0)?;
    let mut converged = util::norm2(&grad) <= cfg.tolerance;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        if converged {
            break;
        }
        if batch < n {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch) {
            let (_, g) = objective(layers, params, set, chunk, cfg.l2);
            step += 1;
            match cfg.optimizer {
                Optimizer::Adam => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    for k in 0..params.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        params[k] -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                }
                _ => {
                    for (p, gk) in params.iter_mut().zip(&g) {
                        *p -= cfg.learning_rate * gk;
                    }
                }
            }
        }
        let all: Vec<usize> = (0..n).collect();
        (loss, grad) = objective(layers, params, set, &all, cfg.l2);
        check_finite(loss, &grad, epoch)?;
        history.push(loss);
        epochs_run = epoch;
        converged = util::norm2(&grad) <= cfg.tolerance;
    }
    Ok(TrainingLog {
        epochs_run,
        final_loss: loss,
        final_gradient_norm: util::norm2(&grad),
        converged,
        loss_history: history,
    })
}

fn run_newton(layers: &[Layer], params: &mut Vec<f64>, set: &EncodedSet, cfg: &TrainingConfig) -> Result<TrainingLog> {
    let all: Vec<usize> = (0..set.len()).collect();
    let (mut loss, mut grad) = objective(layers, params, set, &all, cfg.l2);
    check_finite(loss, &grad, 0)?;
    let mut history = Vec::new();
    let mut epochs_run = 0;
    let mut converged = util::norm2(&grad) <= cfg.tolerance;
    for epoch in 1..=cfg.epochs {
        if converged {
            break;
        }
        let p = params.len();
        let h = DMatrix::from_vec(p, p, dense_hessian_rows(layers, params, set, cfg.l2));
        let g = DVector::from_column_slice(&grad);
        let scale = (h.trace() / p as f64).abs().max(1e-12);
        let mut shift = 0.0;
        let dir = loop {
            let mut hs = h.clone();
            for i in 0..p {
                hs[(i, i)] += shift;
            }
            if let Some(ch) = hs.cholesky() {
                break ch.solve(&g);
            }
            shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
            if shift > 1e8 * scale {
                return Err(Error::Numerical("Newton step: Hessian could not be regularized".into()));
            }
        };
        let slope = g.dot(&dir);
        let mut t = cfg.learning_rate.min(1.0);
        let mut candidate: Vec<f64>;
        loop {
            candidate = params.iter().zip(dir.iter()).map(|(a, d)| a - t * d).collect();
            let value = objective_value(layers, &candidate, set, cfg.l2);
            if value.is_finite() && value <= loss - 1e-4 * t * slope {
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                break;
            }
        }
        if t < 1e-12 {
            // No further decrease is representable.
            epochs_run = epoch;
            history.push(loss);
            converged = util::norm2(&grad) <= cfg.tolerance;
            break;
        }
        *params = candidate;
        (loss, grad) = objective(layers, params, set, &all, cfg.l2);
        check_finite(loss, &grad, epoch)?;
        history.push(loss);
        epochs_run = epoch;
        converged = util::norm2(&grad) <= cfg.tolerance;
    }
    Ok(TrainingLog {
        epochs_run,
        final_loss: loss,
        final_gradient_norm: util::norm2(&grad),
        converged,
        loss_history: history,
    })
}
