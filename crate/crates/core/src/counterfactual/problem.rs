//! Shared evaluation context for one original instance.

use crate::data::{DataSchema, FeatureKind};
use crate::error::{Error, Result};
use crate::grad::input_gradient_encoded;
use crate::grad::OutputTarget;
use crate::grad::scalar::sigmoid;
use crate::model::{InputEncoder, TrainedModel};

use super::CounterfactualQuery;

/// Points per axis in one-dimensional boundary scans.
pub(crate) const LINE_SCAN_POINTS: usize = 64;
const BISECTION_STEPS: usize = 60;

/// Class decided on the logit scale, so rescaling the logit never moves a
/// point across the threshold.
pub(crate) fn class_of(logit: f64, threshold: f64) -> u8 {
    u8::from(logit >= logit_of(threshold))
}

pub(crate) fn logit_of(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// MAD-normalized L1 over continuous features plus one per changed
/// discrete feature.
pub fn cf_distance(x: &[f64], cf: &[f64], stats: &InputEncoder) -> f64 {
    stats
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| match f.kind {
            FeatureKind::Continuous => (cf[j] - x[j]).abs() / f.mad,
            _ => f64::from(u8::from(cf[j] != x[j])),
        })
        .sum()
}

/// Tolerance above which a continuous feature counts as changed.
pub const CHANGE_TOLERANCE: f64 = 1e-9;

pub(crate) fn changed(kind: FeatureKind, a: f64, b: f64) -> bool {
    match kind {
        FeatureKind::Continuous => (a - b).abs() > CHANGE_TOLERANCE,
        _ => a != b,
    }
}

/// Number of features that differ between `x` and `cf`.
pub fn min_features_changed(x: &[f64], cf: &[f64], schema: &DataSchema) -> usize {
    schema
        .features
        .iter()
        .enumerate()
        .filter(|(j, f)| changed(f.kind, x[*j], cf[*j]))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Axis {
    Fixed,
    Continuous { lo: f64, hi: f64, mad: f64 },
    Discrete { levels: usize },
}

pub(crate) struct Problem<'a> {
    pub model: &'a TrainedModel,
    pub x: Vec<f64>,
    pub axes: Vec<Axis>,
    pub target: u8,
    pub threshold: f64,
    threshold_logit: f64,
}

impl<'a> Problem<'a> {
    pub fn new(
        model: &'a TrainedModel,
        schema: &DataSchema,
        x: Vec<f64>,
        target: u8,
        q: &CounterfactualQuery,
    ) -> Result<Self> {
        if schema.len() != model.encoder.features.len() {
            return Err(Error::Config("schema does not match the model's features".into()));
        }
        let mut axes = Vec::with_capacity(schema.len());
        for (j, spec) in schema.features.iter().enumerate() {
            let mutable = q
                .mutability_overrides
                .get(&spec.name)
                .copied()
                .unwrap_or(spec.mutable || !q.respect_immutable);
            let axis = if !mutable {
                Axis::Fixed
            } else if let Some((lo, hi)) = spec.bounds() {
                Axis::Continuous {
                    lo,
                    hi,
                    mad: model.encoder.features[j].mad,
                }
            } else {
                Axis::Discrete {
                    levels: spec.levels().map_or(0, <[String]>::len),
                }
            };
            axes.push(axis);
        }
        if axes.iter().all(|a| *a == Axis::Fixed) {
            return Err(Error::Config("no mutable features to change".into()));
        }
        let t = q.threshold;
        Ok(Problem {
            model,
            x,
            axes,
            target,
            threshold: t,
            threshold_logit: logit_of(t),
        })
    }

    pub fn mutable(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.axes.len()).filter(|&j| self.axes[j] != Axis::Fixed)
    }

    pub fn logit(&self, v: &[f64]) -> f64 {
        self.model.logit_encoded(&self.model.encoder.encode(v))
    }

    pub fn proba(&self, v: &[f64]) -> f64 {
        sigmoid(self.logit(v))
    }

    pub fn valid(&self, v: &[f64]) -> bool {
        class_of(self.logit(v), self.threshold) == self.target
    }

    /// Signed logit distance past the threshold toward the target class.
    pub fn side(&self, v: &[f64]) -> f64 {
        let z = self.logit(v) - self.threshold_logit;
        if self.target == 1 {
            z
        } else {
            -z
        }
    }

    /// Gradient of `side` with respect to raw continuous values (zero on
    /// other coordinates).
    pub fn side_gradient(&self, v: &[f64]) -> Vec<f64> {
        let enc = &self.model.encoder;
        let g = input_gradient_encoded(self.model, &enc.encode(v), OutputTarget::Logit);
        let sign = if self.target == 1 { 1.0 } else { -1.0 };
        enc.features
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Continuous => sign * g[f.offset] / f.std,
                _ => 0.0,
            })
            .collect()
    }

    pub fn distance(&self, v: &[f64]) -> f64 {
        cf_distance(&self.x, v, &self.model.encoder)
    }

    /// Moves feature `j` of the valid point `v` as close to the original as
    /// validity allows, searching its whole range. Returns the new value.
    pub fn closest_valid_1d(&self, v: &[f64], j: usize) -> Option<f64> {
        let mut probe = v.to_vec();
        let x0 = self.x[j];
        let mut eval = |value: f64| {
            probe[j] = value;
            self.valid(&probe)
        };
        match self.axes[j] {
            Axis::Fixed => None,
            Axis::Discrete { levels } => {
                // Original level first, then the current one, then the rest.
                let mut order = vec![x0, v[j]];
                order.extend((0..levels).map(|l| l as f64).filter(|&l| l != x0 && l != v[j]));
                order.into_iter().find(|&l| eval(l))
            }
            Axis::Continuous { lo, hi, .. } => {
                if eval(x0) {
                    return Some(x0);
                }
                let mut best: Option<f64> = None;
                let candidates = std::iter::once(v[j])
                    .chain((0..=LINE_SCAN_POINTS).map(|k| lo + (hi - lo) * k as f64 / LINE_SCAN_POINTS as f64));
                for value in candidates {
                    if best.is_some_and(|b| (value - x0).abs() >= (b - x0).abs()) {
                        continue;
                    }
                    if eval(value) {
                        best = Some(value);
                    }
                }
                let value = best?;
                // Walk from the valid value toward x0 with a bisection on the
                // first validity change along that segment.
                let (mut good, mut bad) = (value, x0);
                let step = (x0 - value) / LINE_SCAN_POINTS as f64;
                for k in 1..=LINE_SCAN_POINTS {
                    let probe_v = value + step * k as f64;
                    if eval(probe_v) {
                        good = probe_v;
                    } else {
                        bad = probe_v;
                        break;
                    }
                }
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (good + bad);
                    if mid == good || mid == bad {
                        break;
                    }
                    if eval(mid) {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                Some(good)
            }
        }
    }

    /// Shortest valid point on the segment from the original to `v`
    /// (continuous coordinates only; discrete ones stay at `v`).
    pub fn segment_shrink(&self, v: &[f64]) -> Vec<f64> {
        let at = |t: f64| -> Vec<f64> {
            v.iter()
                .zip(&self.x)
                .zip(&self.axes)
                .map(|((&vi, &xi), a)| match a {
                    Axis::Continuous { .. } => xi + t * (vi - xi),
                    _ => vi,
                })
                .collect()
        };
        let (mut good, mut bad) = (1.0, 0.0);
        if self.valid(&at(0.0)) {
            return at(0.0);
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (good + bad);
            if self.valid(&at(mid)) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        at(good)
    }

    /// Coordinate-wise shrink until no single feature can move closer.
    pub fn shrink(&self, v: &[f64]) -> Vec<f64> {
        let mut cur = v.to_vec();
        for _ in 0..4 {
            let before = self.distance(&cur);
            let mut order: Vec<usize> = self.mutable().filter(|&j| cur[j] != self.x[j]).collect();
            // Most expensive coordinate first.
            order.sort_by(|&a, &b| self.coordinate_cost(&cur, b).total_cmp(&self.coordinate_cost(&cur, a)).then(a.cmp(&b)));
            for j in order {
                if let Some(value) = self.closest_valid_1d(&cur, j) {
                    let mut trial = cur.clone();
                    trial[j] = value;
                    if self.valid(&trial) && self.distance(&trial) <= self.distance(&cur) {
                        cur = trial;
                    }
                }
            }
            if self.distance(&cur) >= before - 1e-12 {
                break;
            }
        }
        cur
    }

    fn coordinate_cost(&self, v: &[f64], j: usize) -> f64 {
        match self.axes[j] {
            Axis::Continuous { mad, .. } => (v[j] - self.x[j]).abs() / mad,
            Axis::Discrete { .. } => f64::from(u8::from(v[j] != self.x[j])),
            Axis::Fixed => 0.0,
        }
    }

    /// Trades distance between pairs of changed features: scales one
    /// feature's change down and lets the other absorb the difference.
    pub fn pairwise(&self, v: &[f64], grid: usize) -> Vec<f64> {
        let mut best = v.to_vec();
        let mut best_d = self.distance(&best);
        let changed: Vec<usize> = self
            .mutable()
            .filter(|&j| matches!(self.axes[j], Axis::Continuous { .. }) && v[j] != self.x[j])
            .collect();
        let continuous: Vec<usize> = self
            .mutable()
            .filter(|&j| matches!(self.axes[j], Axis::Continuous { .. }))
            .collect();
        for &a in &changed {
            for &b in &continuous {
                if a == b {
                    continue;
                }
                for t in 0..grid {
                    let mut trial = best.clone();
                    trial[a] = self.x[a] + (best[a] - self.x[a]) * t as f64 / grid as f64;
                    let Some(value) = self.closest_valid_1d(&trial, b) else {
                        continue;
                    };
                    trial[b] = value;
                    if !self.valid(&trial) {
                        continue;
                    }
                    let trial = self.shrink(&trial);
                    let d = self.distance(&trial);
                    if self.valid(&trial) && d < best_d - 1e-12 {
                        best = trial;
                        best_d = d;
                    }
                }
            }
        }
        best
    }

    /// Keeps a point inside the plausible box.
    pub fn project(&self, v: &mut [f64]) {
        for (j, a) in self.axes.iter().enumerate() {
            match *a {
                Axis::Fixed => v[j] = self.x[j],
                Axis::Continuous { lo, hi, .. } => v[j] = v[j].clamp(lo, hi),
                Axis::Discrete { .. } => {}
            }
        }
    }
}
