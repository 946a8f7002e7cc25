//! Feature attributions: Gradient*Input, Integrated Gradients, DeepLIFT
//! (Rescale) and exact Shapley values, plus local and global reports.
//!
//! Scores are computed on the encoded input and folded to schema features
//! by summing one-hot components. A positive score pushes the output toward
//! "remain intubated".

mod methods;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, Split};
use crate::error::{Error, Result};
use crate::grad::OutputTarget;
use crate::model::TrainedModel;
use crate::util;

pub use methods::{
    deeplift_encoded, gradient_x_input_fn, integrated_gradients_fn, shapley_fn, Differentiable, ModelOutput,
    DEEPLIFT_GUARD,
};

pub const DEFAULT_IG_STEPS: usize = 300;
pub const DEFAULT_SHAPLEY_MAX_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    ZerosStandardized,
    TrainingMedian,
    Custom,
}

/// Reference input, in encoded coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub values: Vec<f64>,
}

impl Baseline {
    pub fn zeros(m: &TrainedModel) -> Self {
        Baseline {
            kind: BaselineKind::ZerosStandardized,
            values: vec![0.0; m.encoder.width],
        }
    }

    /// Training medians, modal category for categoricals.
    pub fn training_median(m: &TrainedModel) -> Self {
        Baseline {
            kind: BaselineKind::TrainingMedian,
            values: m.encoder.encode(&m.encoder.median_row()),
        }
    }

    pub fn custom(m: &TrainedModel, values: Vec<f64>) -> Result<Self> {
        if values.len() != m.encoder.width {
            return Err(Error::Config(format!(
                "baseline has width {}, model input width is {}",
                values.len(),
                m.encoder.width
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("baseline values must be finite".into()));
        }
        Ok(Baseline {
            kind: BaselineKind::Custom,
            values,
        })
    }

    pub fn of_kind(m: &TrainedModel, kind: BaselineKind) -> Result<Self> {
        match kind {
            BaselineKind::ZerosStandardized => Ok(Self::zeros(m)),
            BaselineKind::TrainingMedian => Ok(Self::training_median(m)),
            BaselineKind::Custom => Err(Error::Config("a custom baseline needs explicit values".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    GradientXInput,
    IntegratedGradients,
    Deeplift,
    Shapley,
}

impl AttributionMethod {
    pub const ALL: [AttributionMethod; 4] = [
        AttributionMethod::GradientXInput,
        AttributionMethod::IntegratedGradients,
        AttributionMethod::Deeplift,
        AttributionMethod::Shapley,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttributionMethod::GradientXInput => "gradient_x_input",
            AttributionMethod::IntegratedGradients => "integrated_gradients",
            AttributionMethod::Deeplift => "deeplift",
            AttributionMethod::Shapley => "shapley",
        }
    }
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gradient_x_input" | "gradxinput" | "gxi" => Ok(AttributionMethod::GradientXInput),
            "integrated_gradients" | "ig" => Ok(AttributionMethod::IntegratedGradients),
            "deeplift" | "deeplift_rescale" => Ok(AttributionMethod::Deeplift),
            "shapley" | "exact_shapley" => Ok(AttributionMethod::Shapley),
            other => Err(Error::Config(format!(
                "unknown attribution method `{other}` (expected gradient_x_input, integrated_gradients, deeplift or shapley)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionOptions {
    pub target: OutputTarget,
    pub ig_steps: usize,
    pub shapley_max_features: usize,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        AttributionOptions {
            target: OutputTarget::Logit,
            ig_steps: DEFAULT_IG_STEPS,
            shapley_max_features: DEFAULT_SHAPLEY_MAX_FEATURES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub method: AttributionMethod,
    pub target: OutputTarget,
    pub baseline: Baseline,
    pub instance_id: Option<String>,
    pub features: Vec<String>,
    /// Per schema feature.
    pub scores: Vec<f64>,
    /// Per encoded column (for Shapley, the feature score on its first
    /// column and zero elsewhere).
    pub encoded_scores: Vec<f64>,
    pub output: f64,
    pub baseline_output: f64,
    /// `output - baseline_output - Σ scores`; absent for Gradient*Input.
    pub residual: Option<f64>,
    pub ig_steps: Option<usize>,
}

impl AttributionVector {
    pub fn score(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|i| self.scores[i])
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    /// `feature,score` rows in schema order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,score\n");
        for (f, s) in self.features.iter().zip(&self.scores) {
            out.push_str(&format!("{},{s}\n", csv_field(f)));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn groups(m: &TrainedModel) -> Vec<Vec<usize>> {
    m.encoder
        .features
        .iter()
        .map(|f| (f.offset..f.offset + f.width).collect())
        .collect()
}

/// Attribution of an already encoded input.
pub fn attribute_encoded(
    m: &TrainedModel,
    x: &[f64],
    method: AttributionMethod,
    baseline: &Baseline,
    options: &AttributionOptions,
) -> Result<AttributionVector> {
    if x.len() != m.encoder.width || baseline.values.len() != m.encoder.width {
        return Err(Error::Config("input or baseline width does not match the model".into()));
    }
    let f = ModelOutput {
        model: m,
        target: options.target,
    };
    let b = &baseline.values;
    let (encoded, scores) = match method {
        AttributionMethod::GradientXInput => {
            let e = gradient_x_input_fn(&f, x, b);
            let s = m.encoder.fold(&e);
            (e, s)
        }
        AttributionMethod::IntegratedGradients => {
            let e = integrated_gradients_fn(&f, x, b, options.ig_steps)?;
            let s = m.encoder.fold(&e);
            (e, s)
        }
        AttributionMethod::Deeplift => {
            let e = deeplift_encoded(m, x, b, options.target);
            let s = m.encoder.fold(&e);
            (e, s)
        }
        AttributionMethod::Shapley => {
            let g = groups(m);
            let s = shapley_fn(&f, x, b, &g, options.shapley_max_features)?;
            let mut e = vec![0.0; x.len()];
            for (cols, v) in g.iter().zip(&s) {
                if let Some(&c) = cols.first() {
                    e[c] = *v;
                }
            }
            (e, s)
        }
    };
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{method} produced non-finite scores")));
    }
    let output = f.value(x);
    let baseline_output = f.value(b);
    let residual = match method {
        AttributionMethod::GradientXInput => None,
        _ => Some(output - baseline_output - scores.iter().sum::<f64>()),
    };
    Ok(AttributionVector {
        method,
        target: options.target,
        baseline: baseline.clone(),
        instance_id: None,
        features: m.encoder.features.iter().map(|f| f.name.clone()).collect(),
        scores,
        encoded_scores: encoded,
        output,
        baseline_output,
        residual,
        ig_steps: (method == AttributionMethod::IntegratedGradients).then_some(options.ig_steps),
    })
}

/// Attribution of one instance with any registered method.
pub fn attribute(
    m: &TrainedModel,
    x: &Instance,
    method: AttributionMethod,
    baseline: &Baseline,
    options: &AttributionOptions,
) -> Result<AttributionVector> {
    let mut v = attribute_encoded(m, &m.encode(x)?, method, baseline, options)?;
    v.instance_id = Some(x.id.clone());
    Ok(v)
}

pub fn gradient_x_input(m: &TrainedModel, x: &Instance, baseline: &Baseline, target: OutputTarget) -> Result<AttributionVector> {
    let options = AttributionOptions {
        target,
        ..AttributionOptions::default()
    };
    attribute(m, x, AttributionMethod::GradientXInput, baseline, &options)
}

pub fn integrated_gradients(
    m: &TrainedModel,
    x: &Instance,
    baseline: &Baseline,
    steps: usize,
    target: OutputTarget,
) -> Result<AttributionVector> {
    let options = AttributionOptions {
        target,
        ig_steps: steps,
        ..AttributionOptions::default()
    };
    attribute(m, x, AttributionMethod::IntegratedGradients, baseline, &options)
}

/// DeepLIFT Rescale on the logit.
pub fn deeplift_rescale(m: &TrainedModel, x: &Instance, reference: &Baseline) -> Result<AttributionVector> {
    attribute(m, x, AttributionMethod::Deeplift, reference, &AttributionOptions::default())
}

/// Exact Shapley values on the logit.
pub fn exact_shapley(m: &TrainedModel, x: &Instance, baseline: &Baseline, max_features: usize) -> Result<AttributionVector> {
    let options = AttributionOptions {
        shapley_max_features: max_features,
        ..AttributionOptions::default()
    };
    attribute(m, x, AttributionMethod::Shapley, baseline, &options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TowardRemainIntubated,
    TowardExtubation,
    Neutral,
}

impl Direction {
    pub fn of(score: f64) -> Self {
        if score > 0.0 {
            Direction::TowardRemainIntubated
        } else if score < 0.0 {
            Direction::TowardExtubation
        } else {
            Direction::Neutral
        }
    }

    pub fn gloss(self) -> &'static str {
        match self {
            Direction::TowardRemainIntubated => "toward remain intubated",
            Direction::TowardExtubation => "toward ready to extubate",
            Direction::Neutral => "no effect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    pub score: f64,
    pub direction: Direction,
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalImportance {
    pub attribution: AttributionVector,
    pub prediction: f64,
    pub contributions: Vec<FeatureContribution>,
    pub positive_total: f64,
    pub negative_total: f64,
    pub model_hash: String,
    pub schema_hash: String,
}

impl LocalImportance {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }
}

/// One instance's attribution with a direction gloss per feature.
pub fn local_importance(
    m: &TrainedModel,
    x: &Instance,
    method: &str,
    baseline: &Baseline,
    options: &AttributionOptions,
) -> Result<LocalImportance> {
    let method: AttributionMethod = method.parse()?;
    let attribution = attribute(m, x, method, baseline, options)?;
    let contributions = attribution
        .features
        .iter()
        .zip(&attribution.scores)
        .map(|(f, &s)| {
            let direction = Direction::of(s);
            FeatureContribution {
                feature: f.clone(),
                score: s,
                direction,
                gloss: direction.gloss().to_string(),
            }
        })
        .collect();
    let positive_total = attribution.scores.iter().filter(|s| **s > 0.0).sum();
    let negative_total = attribution.scores.iter().filter(|s| **s < 0.0).sum();
    Ok(LocalImportance {
        prediction: m.predict_proba(x)?,
        attribution,
        contributions,
        positive_total,
        negative_total,
        model_hash: m.content_hash(),
        schema_hash: m.schema_hash.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFeature {
    pub feature: String,
    pub mean_score: f64,
    pub mean_abs_score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportanceReport {
    pub method: AttributionMethod,
    pub target: OutputTarget,
    pub baseline: BaselineKind,
    pub split: Split,
    pub sample_count: usize,
    /// Schema order.
    pub features: Vec<GlobalFeature>,
    /// Feature names by descending mean absolute score.
    pub ranking: Vec<String>,
    pub model_hash: String,
    pub schema_hash: String,
}

impl GlobalImportanceReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    /// `feature,mean_score,mean_abs_score` rows in rank order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mean_score,mean_abs_score\n");
        for name in &self.ranking {
            let f = self.features.iter().find(|f| &f.feature == name).expect("ranked feature");
            out.push_str(&format!("{},{},{}\n", csv_field(name), f.mean_score, f.mean_abs_score));
        }
        out
    }
}

/// Local attributions averaged over one split, in dataset order.
pub fn global_importance(
    m: &TrainedModel,
    ds: &Dataset,
    split: Split,
    method: AttributionMethod,
    baseline: &Baseline,
    options: &AttributionOptions,
) -> Result<GlobalImportanceReport> {
    let d = m.encoder.features.len();
    let mut sum = vec![0.0; d];
    let mut sum_abs = vec![0.0; d];
    let mut count = 0usize;
    for x in ds.instances_in(split) {
        let v = attribute(m, x, method, baseline, options)?;
        for j in 0..d {
            sum[j] += v.scores[j];
            sum_abs[j] += v.scores[j].abs();
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Data(format!("{split:?} split is empty")));
    }
    let n = count as f64;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sum_abs[b].total_cmp(&sum_abs[a]).then(a.cmp(&b)));
    let mut rank = vec![0; d];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    let features = (0..d)
        .map(|j| GlobalFeature {
            feature: m.encoder.features[j].name.clone(),
            mean_score: sum[j] / n,
            mean_abs_score: sum_abs[j] / n,
            rank: rank[j],
        })
        .collect();
    Ok(GlobalImportanceReport {
        method,
        target: options.target,
        baseline: baseline.kind,
        split,
        sample_count: count,
        features,
        ranking: order.iter().map(|&j| m.encoder.features[j].name.clone()).collect(),
        model_hash: m.content_hash(),
        schema_hash: m.schema_hash.clone(),
    })
}
