//! AUC-ROC and the model comparison report.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::ModelArchitecture;
use super::encoder::InputEncoder;
use super::trained::{train_with_encoder, TrainedModel, TrainingConfig};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};

/// Mann–Whitney AUC: share of (positive, negative) pairs ranked correctly,
/// ties counted as one half.
pub fn auc_roc(scores: &[(f64, u8)]) -> Result<f64> {
    let mut sorted: Vec<(f64, u8)> = scores.to_vec();
    if sorted.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Numerical("AUC input contains NaN scores".into()));
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = sorted.iter().filter(|(_, y)| *y == 1).count();
    let n_neg = sorted.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("AUC undefined: scores contain a single class".into()));
    }
    // Sum of positive ranks with average ranks over ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * sorted[i..=j].iter().filter(|(_, y)| *y == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretability {
    Intrinsic,
    PostHoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub architecture: ModelArchitecture,
    pub auc: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub parameter_count: usize,
    pub interpretability: Interpretability,
    pub final_training_loss: f64,
    pub converged: bool,
}

/// Scores a model on one split at threshold 0.5.
pub fn evaluate(m: &TrainedModel, ds: &Dataset, split: Split) -> Result<ModelMetrics> {
    let mut scores = Vec::new();
    let mut confusion = Confusion::default();
    for inst in ds.instances_in(split) {
        let p = m.predict_proba(inst)?;
        scores.push((p, inst.label));
        match (p >= 0.5, inst.label == 1) {
            (true, true) => confusion.true_positive += 1,
            (true, false) => confusion.false_positive += 1,
            (false, false) => confusion.true_negative += 1,
            (false, true) => confusion.false_negative += 1,
        }
    }
    if scores.is_empty() {
        return Err(Error::Data(format!("{split:?} split is empty")));
    }
    let correct = confusion.true_positive + confusion.true_negative;
    Ok(ModelMetrics {
        model: m.architecture.name().to_string(),
        architecture: m.architecture.clone(),
        auc: auc_roc(&scores)?,
        accuracy: correct as f64 / scores.len() as f64,
        confusion,
        parameter_count: m.parameter_count(),
        interpretability: if m.architecture.is_intrinsically_interpretable() {
            Interpretability::Intrinsic
        } else {
            Interpretability::PostHoc
        },
        final_training_loss: m.training_log.final_loss,
        converged: m.training_log.converged,
    })
}

/// Performance against explainability, as read off the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeOff {
    pub best_model: String,
    pub best_auc: f64,
    pub best_interpretable_model: Option<String>,
    pub best_interpretable_auc: Option<f64>,
    /// `best_auc - best_interpretable_auc`.
    pub auc_cost_of_interpretability: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_hash: String,
    pub train_size: usize,
    pub test_size: usize,
    pub models: Vec<ModelMetrics>,
    pub random_label_control: Option<RandomLabelControl>,
    pub trade_off: TradeOff,
}

impl MetricsReport {
    pub fn model(&self, name: &str) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.model == name)
    }

    /// `model,auc` rows, control last.
    pub fn auc_csv(&self) -> String {
        let mut out = String::from("model,auc\n");
        for m in &self.models {
            out.push_str(&format!("{},{}\n", m.model, m.auc));
        }
        if let Some(c) = &self.random_label_control {
            out.push_str(&format!("random_label_control,{}\n", c.mean_auc));
        }
        out
    }
}

/// Logistic regression trained on permuted training labels and scored on
/// the true test labels. A single permutation has an AUC spread of a few
/// hundredths on a few hundred test records, so several are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomLabelControl {
    pub repeats: usize,
    pub aucs: Vec<f64>,
    pub mean_auc: f64,
    /// Metrics of the first permutation.
    pub first: ModelMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Also train the shuffled-label control with this config.
    pub control: Option<TrainingConfig>,
    #[serde(default = "default_control_repeats")]
    pub control_repeats: usize,
}

fn default_control_repeats() -> usize {
    5
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            control: None,
            control_repeats: default_control_repeats(),
        }
    }
}

/// Trains every architecture on the same split and encoder and reports test
/// metrics.
pub fn compare_models(
    ds: &Dataset,
    candidates: &[(ModelArchitecture, TrainingConfig)],
    options: &CompareOptions,
) -> Result<MetricsReport> {
    if candidates.len() < 2 {
        return Err(Error::Config("model comparison needs at least two architectures".into()));
    }
    let encoder = InputEncoder::fit(ds)?;
    let mut trained = Vec::with_capacity(candidates.len());
    for (arch, cfg) in candidates {
        trained.push(train_with_encoder(ds, arch, cfg, encoder.clone()).map_err(|e| annotate(arch.name(), e))?);
    }
    compare_trained(ds, &trained, options)
}

fn annotate(name: &str, e: Error) -> Error {
    Error::Model {
        model: name.to_string(),
        source: Box::new(e),
    }
}

/// Comparison report for models already trained on `ds`. The control reuses
/// the first model's encoder.
pub fn compare_trained(ds: &Dataset, trained: &[TrainedModel], options: &CompareOptions) -> Result<MetricsReport> {
    if trained.len() < 2 {
        return Err(Error::Config("model comparison needs at least two architectures".into()));
    }
    let encoder = trained[0].encoder.clone();
    let mut models = Vec::with_capacity(trained.len());
    for m in trained {
        models.push(evaluate(m, ds, Split::Test).map_err(|e| annotate(m.architecture.name(), e))?);
    }
    let random_label_control = match &options.control {
        Some(cfg) => {
            let repeats = options.control_repeats.max(1);
            let arch = ModelArchitecture::logreg(encoder.width);
            let mut runs = Vec::with_capacity(repeats);
            for r in 0..repeats as u64 {
                let shuffled = shuffle_train_labels(ds, cfg.seed.wrapping_add(r));
                let m = train_with_encoder(&shuffled, &arch, cfg, encoder.clone())
                    .map_err(|e| annotate("random_label_control", e))?;
                runs.push(evaluate(&m, ds, Split::Test).map_err(|e| annotate("random_label_control", e))?);
            }
            let aucs: Vec<f64> = runs.iter().map(|m| m.auc).collect();
            Some(RandomLabelControl {
                repeats,
                mean_auc: aucs.iter().sum::<f64>() / repeats as f64,
                aucs,
                first: runs.swap_remove(0),
            })
        }
        None => None,
    };
    let best = models
        .iter()
        .fold(None::<&ModelMetrics>, |acc, m| match acc {
            Some(a) if a.auc >= m.auc => Some(a),
            _ => Some(m),
        })
        .expect("at least two models");
    let best_interp = models
        .iter()
        .filter(|m| m.interpretability == Interpretability::Intrinsic)
        .fold(None::<&ModelMetrics>, |acc, m| match acc {
            Some(a) if a.auc >= m.auc => Some(a),
            _ => Some(m),
        });
    let cost = best_interp.map(|m| best.auc - m.auc);
    let note = match (best_interp, cost) {
        (Some(i), Some(c)) if c > 0.0 => format!(
            "{} scores highest but needs post-hoc explanation; the intrinsically interpretable {} trails by {c:.4} AUC",
            best.model, i.model
        ),
        (Some(i), _) => format!("the intrinsically interpretable {} is at least as accurate as every other model", i.model),
        (None, _) => format!("{} scores highest; no intrinsically interpretable model was compared", best.model),
    };
    Ok(MetricsReport {
        schema_hash: ds.schema.content_hash(),
        train_size: ds.indices(Split::Train).len(),
        test_size: ds.indices(Split::Test).len(),
        trade_off: TradeOff {
            best_model: best.model.clone(),
            best_auc: best.auc,
            best_interpretable_model: best_interp.map(|m| m.model.clone()),
            best_interpretable_auc: best_interp.map(|m| m.auc),
            auc_cost_of_interpretability: cost,
            note,
        },
        models,
        random_label_control,
    })
}

/// Copy of `ds` with training labels permuted by a seeded shuffle.
pub fn shuffle_train_labels(ds: &Dataset, seed: u64) -> Dataset {
    let train = ds.indices(Split::Train);
    let mut labels: Vec<u8> = train.iter().map(|&i| ds.instances[i].label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee));
    let mut out = ds.clone();
    for (&i, y) in train.iter().zip(labels) {
        out.instances[i].label = y;
    }
    out
}
