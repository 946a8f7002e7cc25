//! Influence functions: how upweighting or removing one training instance
//! moves the parameters and a test loss, plus the retraining oracle that
//! checks those estimates.
//!
//! Sign convention: an influence value on loss is
//! `-∇L(z_test)ᵀ (H + λI)⁻¹ ∇L(z)`. Negative means upweighting `z` lowers
//! the test loss (helpful for that prediction), positive means it raises it
//! (harmful). Removing `z` changes the test loss by about `-value / n`.

mod loo;
mod solve;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, Split};
use crate::error::{Error, Result};
use crate::grad::{param_gradient, GradientVector, HessianOperator};
use crate::model::TrainedModel;
use crate::util;

pub use loo::{loo_from_model, loo_retrain_oracle, LooOutcome};
pub use solve::{
    conjugate_gradient, dense_matrix, dense_solve, solve_with, CgOutcome, DenseOperator, IhvpConfig, IhvpMethod,
    LinearOperator,
};

pub const APPROXIMATE_NOTE: &str = "approximate (damped, non-convex)";

/// `(H + λ_damp I)⁻¹ v` over the model's training split.
pub fn ihvp(m: &TrainedModel, ds: &Dataset, v: &[f64], cfg: &IhvpConfig) -> Result<GradientVector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("ihvp input is not finite".into()));
    }
    let op = HessianOperator::new(m, ds, cfg.damping)?;
    solve_with(&op, v, cfg)
}

fn train_instance<'a>(ds: &'a Dataset, z: &Instance) -> Result<&'a Instance> {
    match ds.position(&z.id) {
        Some(i) if ds.split[i] == Split::Train => Ok(&ds.instances[i]),
        Some(_) => Err(Error::Data(format!("`{}` is not in the training split", z.id))),
        None => Err(Error::UnknownId(z.id.clone())),
    }
}

fn train_size(ds: &Dataset) -> Result<usize> {
    let n = ds.indices(Split::Train).len();
    if n == 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    Ok(n)
}

/// `I_up,params(z) = -(H + λI)⁻¹ ∇L(z)`.
pub fn influence_on_params(m: &TrainedModel, ds: &Dataset, z: &Instance, cfg: &IhvpConfig) -> Result<GradientVector> {
    train_instance(ds, z)?;
    let g = param_gradient(m, z)?;
    Ok(ihvp(m, ds, &g, cfg)?.into_iter().map(|x| -x).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalEffect {
    pub train_id: String,
    pub train_size: usize,
    /// Estimated `θ̂₋z - θ̂ = -(1/n) I_up,params(z)`.
    pub delta_params: Vec<f64>,
}

pub fn removal_effect(m: &TrainedModel, ds: &Dataset, z: &Instance, cfg: &IhvpConfig) -> Result<RemovalEffect> {
    let n = train_size(ds)?;
    let up = influence_on_params(m, ds, z, cfg)?;
    Ok(RemovalEffect {
        train_id: z.id.clone(),
        train_size: n,
        delta_params: up.into_iter().map(|x| -x / n as f64).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceGloss {
    /// Upweighting lowers the test loss.
    Helpful,
    /// Upweighting raises the test loss.
    Harmful,
    Neutral,
}

impl InfluenceGloss {
    pub fn of(value: f64) -> Self {
        if value < 0.0 {
            InfluenceGloss::Helpful
        } else if value > 0.0 {
            InfluenceGloss::Harmful
        } else {
            InfluenceGloss::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceScore {
    pub train_id: String,
    pub test_id: String,
    pub value: f64,
    /// `-value / n`: first-order test-loss change when `z` is removed.
    pub predicted_loss_change: f64,
    pub gloss: InfluenceGloss,
}

impl InfluenceScore {
    fn new(train_id: &str, test_id: &str, value: f64, n: usize) -> Self {
        InfluenceScore {
            train_id: train_id.to_string(),
            test_id: test_id.to_string(),
            value,
            predicted_loss_change: -value / n as f64,
            gloss: InfluenceGloss::of(value),
        }
    }
}

/// `s_test = (H + λI)⁻¹ ∇L(z_test)`, shared by every training instance.
fn s_test(m: &TrainedModel, ds: &Dataset, z_test: &Instance, cfg: &IhvpConfig) -> Result<Vec<f64>> {
    let g = param_gradient(m, z_test)?;
    ihvp(m, ds, &g, cfg)
}

fn score_from(s: &[f64], g: &[f64]) -> f64 {
    -util::dot(s, g)
}

/// Influence of upweighting `z` on the loss at `z_test`.
pub fn influence_on_loss(
    m: &TrainedModel,
    ds: &Dataset,
    z: &Instance,
    z_test: &Instance,
    cfg: &IhvpConfig,
) -> Result<InfluenceScore> {
    let n = train_size(ds)?;
    let s = s_test(m, ds, z_test, cfg)?;
    let g = param_gradient(m, z)?;
    let value = score_from(&s, &g);
    if !value.is_finite() {
        return Err(Error::Numerical("influence value is not finite".into()));
    }
    Ok(InfluenceScore::new(&z.id, &z_test.id, value, n))
}

/// Influence of every training instance (dataset order) on one test
/// instance, from a single inverse-HVP.
pub fn influence_values(m: &TrainedModel, ds: &Dataset, test_id: &str, cfg: &IhvpConfig) -> Result<Vec<InfluenceScore>> {
    let z_test = ds.get(test_id)?;
    let n = train_size(ds)?;
    let s = s_test(m, ds, z_test, cfg)?;
    ds.train()
        .map(|z| {
            let value = score_from(&s, &param_gradient(m, z)?);
            if !value.is_finite() {
                return Err(Error::Numerical(format!("influence of `{}` is not finite", z.id)));
            }
            Ok(InfluenceScore::new(&z.id, test_id, value, n))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEntry {
    pub rank: usize,
    pub train_id: String,
    pub value: f64,
    pub predicted_loss_change: f64,
    pub gloss: InfluenceGloss,
    pub extubation_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub test_id: String,
    pub test_label: u8,
    pub test_prediction: f64,
    pub train_size: usize,
    pub ihvp: IhvpConfig,
    /// Set for non-convex models.
    pub approximation: Option<String>,
    pub model_hash: String,
    pub schema_hash: String,
    pub entries: Vec<InfluenceEntry>,
}

impl InfluenceReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    /// `train_id,value,extubation_failure` rows in rank order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train_id,value,extubation_failure\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.train_id, e.value, e.extubation_failure));
        }
        out
    }
}

/// Sorts by `|value|` descending, ties by ascending train id.
fn rank(scores: &mut [InfluenceScore]) {
    scores.sort_by(|a, b| {
        b.value
            .abs()
            .total_cmp(&a.value.abs())
            .then_with(|| a.train_id.cmp(&b.train_id))
    });
}

/// The `k` most influential training instances for one test instance.
pub fn top_influencers(
    m: &TrainedModel,
    ds: &Dataset,
    test_id: &str,
    k: usize,
    cfg: &IhvpConfig,
) -> Result<InfluenceReport> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let z_test = ds.get(test_id)?;
    let mut scores = influence_values(m, ds, test_id, cfg)?;
    let n = scores.len();
    rank(&mut scores);
    scores.truncate(k);
    let entries = scores
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let flag = ds.get(&s.train_id).map(|z| z.extubation_failure)?;
            Ok(InfluenceEntry {
                rank: i + 1,
                train_id: s.train_id,
                value: s.value,
                predicted_loss_change: s.predicted_loss_change,
                gloss: s.gloss,
                extubation_failure: flag,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InfluenceReport {
        test_id: test_id.to_string(),
        test_label: z_test.label,
        test_prediction: m.predict_proba(z_test)?,
        train_size: n,
        ihvp: *cfg,
        approximation: approximation_note(m),
        model_hash: m.content_hash(),
        schema_hash: m.schema_hash.clone(),
        entries,
    })
}

pub fn approximation_note(m: &TrainedModel) -> Option<String> {
    if m.architecture.is_intrinsically_interpretable() {
        None
    } else {
        Some(APPROXIMATE_NOTE.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortInfluenceSummary {
    pub test_id: String,
    pub flag: String,
    pub cohort_size: usize,
    pub count_negative: usize,
    pub count_positive: usize,
    pub count_zero: usize,
    /// Same as `count_negative`, in helpful/harmful terms.
    pub count_helpful: usize,
    /// Same as `count_positive`.
    pub count_harmful: usize,
    pub mean: f64,
    pub histogram: Vec<HistogramBin>,
    pub ihvp: IhvpConfig,
    pub approximation: Option<String>,
}

pub const HISTOGRAM_BINS: usize = 10;

fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![HistogramBin {
            lower: lo,
            upper: hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lower: lo + b as f64 * width,
            upper: if b + 1 == HISTOGRAM_BINS { hi } else { lo + (b + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for v in values {
        let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[b].count += 1;
    }
    bins
}

/// Distribution of influence values over the training instances carrying
/// `flag` (currently the extubation-failure column).
pub fn cohort_influence_summary(
    m: &TrainedModel,
    ds: &Dataset,
    test_id: &str,
    flag: &str,
    cfg: &IhvpConfig,
) -> Result<CohortInfluenceSummary> {
    if flag != ds.schema.cohort_flags.extubation_failure {
        return Err(Error::Config(format!("unknown cohort flag column `{flag}`")));
    }
    let scores = influence_values(m, ds, test_id, cfg)?;
    let flagged: Vec<bool> = ds.train().map(|z| z.extubation_failure).collect();
    summarize(test_id, flag, &scores, &flagged, cfg, approximation_note(m))
}

pub(crate) fn summarize(
    test_id: &str,
    flag: &str,
    scores: &[InfluenceScore],
    flagged: &[bool],
    cfg: &IhvpConfig,
    approximation: Option<String>,
) -> Result<CohortInfluenceSummary> {
    let values: Vec<f64> = scores
        .iter()
        .zip(flagged)
        .filter(|(_, f)| **f)
        .map(|(s, _)| s.value)
        .collect();
    if values.is_empty() {
        return Err(Error::Data(format!("no training instance carries `{flag}`")));
    }
    let count_negative = values.iter().filter(|v| **v < 0.0).count();
    let count_positive = values.iter().filter(|v| **v > 0.0).count();
    Ok(CohortInfluenceSummary {
        test_id: test_id.to_string(),
        flag: flag.to_string(),
        cohort_size: values.len(),
        count_negative,
        count_positive,
        count_zero: values.len() - count_negative - count_positive,
        count_helpful: count_negative,
        count_harmful: count_positive,
        mean: util::mean(&values),
        histogram: histogram(&values),
        ihvp: *cfg,
        approximation,
    })
}
