//! Counterfactual explanations: diverse minimal changes that flip the
//! prediction, a grid oracle for small problems, single point of failure
//! sweeps and a robustness score.

mod problem;
mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{DataSchema, Dataset, FeatureKind, Instance};
use crate::error::{Error, Result};
use crate::grad::scalar::sigmoid;
use crate::model::TrainedModel;
use crate::util;

use problem::{changed, class_of, Axis, Problem};

pub use problem::{cf_distance, min_features_changed, CHANGE_TOLERANCE};
pub use search::CATEGORICAL_EVERY;

/// Largest number of mutable features the grid oracle accepts.
pub const GRID_ORACLE_MAX_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "class")]
pub enum CfTarget {
    /// The class opposite to the current prediction.
    Flip,
    Class(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualQuery {
    pub target: CfTarget,
    pub k: usize,
    pub threshold: f64,
    pub proximity_weight: f64,
    pub diversity_weight: f64,
    pub max_iterations: usize,
    pub respect_immutable: bool,
    /// Per-feature mutability, overriding the schema.
    pub mutability_overrides: BTreeMap<String, bool>,
    /// Hinge margin on the target-side logit.
    pub margin: f64,
    /// Adam step in MAD units.
    pub learning_rate: f64,
    /// Grid size for the pairwise reallocation of the nearest candidate.
    pub pairwise_grid: usize,
    pub seed: u64,
}

impl Default for CounterfactualQuery {
    fn default() -> Self {
        CounterfactualQuery {
            target: CfTarget::Flip,
            k: 4,
            threshold: 0.5,
            proximity_weight: 0.5,
            diversity_weight: 0.5,
            max_iterations: 300,
            respect_immutable: true,
            mutability_overrides: BTreeMap::new(),
            margin: 0.05,
            learning_rate: 0.1,
            pairwise_grid: 32,
            seed: 1,
        }
    }
}

impl CounterfactualQuery {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must lie in (0, 1)".into()));
        }
        for (name, w) in [
            ("proximity weight", self.proximity_weight),
            ("diversity weight", self.diversity_weight),
            ("margin", self.margin),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if let CfTarget::Class(c) = self.target {
            if c > 1 {
                return Err(Error::Config(format!("target class {c} is not 0 or 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualExample {
    /// Raw values in schema order.
    pub values: Vec<f64>,
    pub changed: Vec<String>,
    pub probability: f64,
    pub distance: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfStatus {
    Found,
    /// Fewer than k valid examples.
    Partial,
    NotFound,
    /// The instance is already on the target side.
    AlreadyTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub instance_id: String,
    pub original: Vec<f64>,
    pub original_probability: f64,
    pub target_class: u8,
    pub status: CfStatus,
    pub warnings: Vec<String>,
    pub examples: Vec<CounterfactualExample>,
    pub query: CounterfactualQuery,
}

impl CounterfactualSet {
    pub fn nearest(&self) -> Option<&CounterfactualExample> {
        self.examples.first()
    }
}

fn example(problem: &Problem<'_>, schema: &DataSchema, v: Vec<f64>) -> CounterfactualExample {
    let changed_names = schema
        .features
        .iter()
        .enumerate()
        .filter(|(j, f)| changed(f.kind, problem.x[*j], v[*j]))
        .map(|(_, f)| f.name.clone())
        .collect();
    CounterfactualExample {
        probability: problem.proba(&v),
        distance: problem.distance(&v),
        valid: problem.valid(&v),
        changed: changed_names,
        values: v,
    }
}

fn target_for(q: &CounterfactualQuery, current: u8) -> u8 {
    match q.target {
        CfTarget::Flip => 1 - current,
        CfTarget::Class(c) => c,
    }
}

/// Up to `k` diverse valid counterfactuals for `x`, nearest first.
pub fn generate_counterfactuals(
    m: &TrainedModel,
    schema: &DataSchema,
    x: &Instance,
    q: &CounterfactualQuery,
) -> Result<CounterfactualSet> {
    q.validate()?;
    let raw = m.encoder.raw_values(x)?;
    let z0 = m.logit_encoded(&m.encoder.encode(&raw));
    let p0 = sigmoid(z0);
    let current = class_of(z0, q.threshold);
    let target = target_for(q, current);
    let problem = Problem::new(m, schema, raw.clone(), target, q)?;
    let mut set = CounterfactualSet {
        instance_id: x.id.clone(),
        original: raw.clone(),
        original_probability: p0,
        target_class: target,
        status: CfStatus::Found,
        warnings: Vec::new(),
        examples: Vec::new(),
        query: q.clone(),
    };
    if current == target {
        set.status = CfStatus::AlreadyTarget;
        set.warnings
            .push("instance is already on the target side; returning it unchanged".into());
        set.examples.push(example(&problem, schema, raw));
        return Ok(set);
    }
    let candidates = search::optimize(&problem, q);
    let refined = search::refine(&problem, candidates, q);
    set.examples = refined
        .into_iter()
        .take(q.k)
        .map(|v| example(&problem, schema, v))
        .collect();
    debug_assert!(set.examples.iter().all(|e| e.valid));
    if set.examples.is_empty() {
        set.status = CfStatus::NotFound;
        set.warnings.push("no valid counterfactual found".into());
    } else if set.examples.len() < q.k {
        set.status = CfStatus::Partial;
        set.warnings.push(format!(
            "found {} of {} requested counterfactuals",
            set.examples.len(),
            q.k
        ));
    }
    Ok(set)
}

/// Minimal-distance valid point on a grid over the mutable features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub values: Vec<f64>,
    pub distance: f64,
    pub probability: f64,
    pub grid_points: usize,
}

/// Exhaustive grid search. Each continuous axis holds `resolution` evenly
/// spaced points over its plausible range plus the original value; discrete
/// axes hold every level. Validity means crossing the threshold.
pub fn grid_oracle(
    m: &TrainedModel,
    schema: &DataSchema,
    x: &Instance,
    resolution: usize,
    q: &CounterfactualQuery,
) -> Result<Option<OracleResult>> {
    q.validate()?;
    if resolution < 2 {
        return Err(Error::Config("grid resolution must be >= 2".into()));
    }
    let raw = m.encoder.raw_values(x)?;
    let current = class_of(m.logit_encoded(&m.encoder.encode(&raw)), q.threshold);
    let problem = Problem::new(m, schema, raw.clone(), target_for(q, current), q)?;
    let mutable: Vec<usize> = problem.mutable().collect();
    if mutable.len() > GRID_ORACLE_MAX_FEATURES {
        return Err(Error::Config(format!(
            "grid oracle accepts at most {GRID_ORACLE_MAX_FEATURES} mutable features, got {}",
            mutable.len()
        )));
    }
    let axes: Vec<Vec<f64>> = mutable
        .iter()
        .map(|&j| match problem.axes[j] {
            Axis::Continuous { lo, hi, .. } => {
                let mut pts: Vec<f64> = (0..resolution)
                    .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
                    .collect();
                pts.push(raw[j]);
                pts
            }
            Axis::Discrete { levels } => (0..levels).map(|l| l as f64).collect(),
            Axis::Fixed => vec![raw[j]],
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; axes.len()];
    let mut v = raw.clone();
    for _ in 0..total {
        for (a, &j) in mutable.iter().enumerate() {
            v[j] = axes[a][idx[a]];
        }
        if problem.valid(&v) {
            let d = problem.distance(&v);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, v.clone()));
            }
        }
        for a in 0..idx.len() {
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(best.map(|(distance, values)| OracleResult {
        probability: problem.proba(&values),
        distance,
        values,
        grid_points: total,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpofWitness {
    pub instance_id: String,
    pub feature: String,
    pub original_value: f64,
    pub flipping_value: f64,
    pub probability: f64,
}

pub const DEFAULT_SPOF_RESOLUTION: usize = 101;

/// Sweeps each mutable feature alone over its plausible range; any value
/// that flips the prediction is a witness. Reports the flipping value
/// nearest to the original per feature.
pub fn spof_check(
    m: &TrainedModel,
    schema: &DataSchema,
    x: &Instance,
    resolution: usize,
    q: &CounterfactualQuery,
) -> Result<Vec<SpofWitness>> {
    if resolution < 2 {
        return Err(Error::Config("sweep resolution must be >= 2".into()));
    }
    let raw = m.encoder.raw_values(x)?;
    let current = class_of(m.logit_encoded(&m.encoder.encode(&raw)), q.threshold);
    let flip = CounterfactualQuery {
        target: CfTarget::Flip,
        ..q.clone()
    };
    let problem = match Problem::new(m, schema, raw.clone(), 1 - current, &flip) {
        Ok(p) => p,
        Err(Error::Config(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut witnesses = Vec::new();
    let mut v = raw.clone();
    for j in problem.mutable().collect::<Vec<_>>() {
        let values: Vec<f64> = match problem.axes[j] {
            Axis::Continuous { lo, hi, .. } => (0..resolution)
                .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
                .collect(),
            Axis::Discrete { levels } => (0..levels).map(|l| l as f64).collect(),
            Axis::Fixed => continue,
        };
        let mut best: Option<(f64, f64)> = None;
        for value in values {
            v[j] = value;
            if problem.valid(&v) {
                let gap = (value - raw[j]).abs();
                if best.is_none_or(|(g, _)| gap < g) {
                    best = Some((gap, value));
                }
            }
        }
        v[j] = raw[j];
        if let Some((_, value)) = best {
            v[j] = value;
            witnesses.push(SpofWitness {
                instance_id: x.id.clone(),
                feature: schema.features[j].name.clone(),
                original_value: raw[j],
                flipping_value: value,
                probability: problem.proba(&v),
            });
            v[j] = raw[j];
        }
    }
    Ok(witnesses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRobustness {
    pub instance_id: String,
    pub status: CfStatus,
    pub nearest_distance: Option<f64>,
    pub min_features_changed: Option<usize>,
    pub spof_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub sample_size: usize,
    pub instances: Vec<InstanceRobustness>,
    /// Mean nearest-counterfactual distance over instances with one;
    /// `None` when no instance has a counterfactual.
    pub score: Option<f64>,
    pub no_counterfactual: Vec<String>,
    /// Count of instances by features changed in their nearest example.
    pub min_features_histogram: BTreeMap<usize, usize>,
    pub spof_witnesses: Vec<SpofWitness>,
    pub model_hash: String,
    pub schema_hash: String,
}

impl RobustnessReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }
}

/// Counterfactual search and SPOF sweep over a sample of instances.
pub fn robustness_score(
    m: &TrainedModel,
    schema: &DataSchema,
    sample: &[&Instance],
    q: &CounterfactualQuery,
    spof_resolution: usize,
) -> Result<RobustnessReport> {
    if sample.is_empty() {
        return Err(Error::Data("robustness sample is empty".into()));
    }
    let mut instances = Vec::with_capacity(sample.len());
    let mut distances = Vec::new();
    let mut histogram = BTreeMap::new();
    let mut no_cf = Vec::new();
    let mut witnesses = Vec::new();
    for x in sample {
        let set = generate_counterfactuals(m, schema, x, q)?;
        let spof = spof_check(m, schema, x, spof_resolution, q)?;
        let nearest = set.nearest().filter(|e| e.valid);
        let changed = nearest.map(|e| min_features_changed(&set.original, &e.values, schema));
        match nearest {
            Some(e) => {
                distances.push(e.distance);
                *histogram.entry(changed.unwrap_or(0)).or_insert(0) += 1;
            }
            None => no_cf.push(x.id.clone()),
        }
        instances.push(InstanceRobustness {
            instance_id: x.id.clone(),
            status: set.status,
            nearest_distance: nearest.map(|e| e.distance),
            min_features_changed: changed,
            spof_features: spof.iter().map(|w| w.feature.clone()).collect(),
        });
        witnesses.extend(spof);
    }
    Ok(RobustnessReport {
        sample_size: sample.len(),
        instances,
        score: (!distances.is_empty()).then(|| util::mean(&distances)),
        no_counterfactual: no_cf,
        min_features_histogram: histogram,
        spof_witnesses: witnesses,
        model_hash: m.content_hash(),
        schema_hash: schema.content_hash(),
    })
}

/// Picks instances of one split in dataset order, up to `limit`.
pub fn sample_split<'a>(ds: &'a Dataset, split: crate::data::Split, limit: usize) -> Vec<&'a Instance> {
    ds.instances_in(split).take(limit).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfTableRow {
    pub feature: String,
    pub original: String,
    /// `"-"` where the counterfactual keeps the original value.
    pub counterfactuals: Vec<String>,
}

/// Feature rows with the original and each counterfactual, then the
/// predicted outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfTable {
    pub instance_id: String,
    pub rows: Vec<CfTableRow>,
    pub original_outcome: f64,
    pub outcomes: Vec<f64>,
    pub distances: Vec<f64>,
    pub status: CfStatus,
    pub warnings: Vec<String>,
    pub model_hash: String,
    pub schema_hash: String,
}

pub const UNCHANGED: &str = "-";

/// Renders a raw value: level names for discrete features, continuous
/// values with at most two decimals.
pub fn display_value(schema: &DataSchema, j: usize, value: f64) -> String {
    let spec = &schema.features[j];
    match spec.kind {
        FeatureKind::Continuous => {
            let s = format!("{:.2}", value);
            let s = s.trim_end_matches('0').trim_end_matches('.');
            if s == "-0" {
                "0".to_string()
            } else {
                s.to_string()
            }
        }
        _ => spec
            .levels()
            .and_then(|l| l.get(value as usize))
            .cloned()
            .unwrap_or_else(|| value.to_string()),
    }
}

impl CfTable {
    pub fn new(set: &CounterfactualSet, schema: &DataSchema, m: &TrainedModel) -> Self {
        let rows = schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| CfTableRow {
                feature: f.name.clone(),
                original: display_value(schema, j, set.original[j]),
                counterfactuals: set
                    .examples
                    .iter()
                    .map(|e| {
                        if changed(f.kind, set.original[j], e.values[j]) {
                            display_value(schema, j, e.values[j])
                        } else {
                            UNCHANGED.to_string()
                        }
                    })
                    .collect(),
            })
            .collect();
        CfTable {
            instance_id: set.instance_id.clone(),
            rows,
            original_outcome: set.original_probability,
            outcomes: set.examples.iter().map(|e| e.probability).collect(),
            distances: set.examples.iter().map(|e| e.distance).collect(),
            status: set.status,
            warnings: set.warnings.clone(),
            model_hash: m.content_hash(),
            schema_hash: schema.content_hash(),
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,original");
        for i in 1..=self.outcomes.len() {
            out.push_str(&format!(",cf{i}"));
        }
        out.push('\n');
        let field = crate::attribution::csv_field;
        for r in &self.rows {
            out.push_str(&field(&r.feature));
            out.push(',');
            out.push_str(&field(&r.original));
            for c in &r.counterfactuals {
                out.push(',');
                out.push_str(&field(c));
            }
            out.push('\n');
        }
        out.push_str(&format!("Predicted outcome,{:.2}", self.original_outcome));
        for o in &self.outcomes {
            out.push_str(&format!(",{o:.2}"));
        }
        out.push('\n');
        out
    }
}
