//! Joint optimization of k candidates followed by minimality refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::problem::{Axis, Problem};
use super::CounterfactualQuery;

/// Categorical coordinate search runs every this many gradient steps.
pub const CATEGORICAL_EVERY: usize = 10;

struct Candidates<'p, 'a> {
    problem: &'p Problem<'a>,
    q: &'p CounterfactualQuery,
}

impl Candidates<'_, '_> {
    fn hinge(&self, v: &[f64]) -> f64 {
        (self.q.margin - self.problem.side(v)).max(0.0)
    }

    fn diversity_share(&self, all: &[Vec<f64>], j: usize, v: &[f64]) -> f64 {
        if all.len() < 2 {
            return 0.0;
        }
        let pairs = (all.len() * (all.len() - 1) / 2) as f64;
        let enc = &self.problem.model.encoder;
        all.iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, o)| super::cf_distance(o, v, enc))
            .sum::<f64>()
            / pairs
    }

    fn objective(&self, all: &[Vec<f64>], j: usize, v: &[f64]) -> f64 {
        let diversity = if j == 0 { 0.0 } else { self.diversity_share(all, j, v) };
        self.hinge(v) + self.q.proximity_weight * self.problem.distance(v) - self.q.diversity_weight * diversity
    }

    /// Gradient with respect to MAD-scaled continuous coordinates.
    fn gradient(&self, all: &[Vec<f64>], j: usize) -> Vec<f64> {
        let p = self.problem;
        let v = &all[j];
        let mut g = vec![0.0; v.len()];
        let active = self.q.margin - p.side(v) > 0.0;
        let side_grad = if active { Some(p.side_gradient(v)) } else { None };
        let pairs = if all.len() > 1 {
            (all.len() * (all.len() - 1) / 2) as f64
        } else {
            1.0
        };
        for (k, axis) in p.axes.iter().enumerate() {
            let Axis::Continuous { mad, .. } = *axis else {
                continue;
            };
            let mut d = 0.0;
            if let Some(sg) = &side_grad {
                d -= sg[k];
            }
            d += self.q.proximity_weight * sign(v[k] - p.x[k]) / mad;
            if j != 0 {
                let push: f64 = all
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != j)
                    .map(|(_, o)| sign(v[k] - o[k]) / mad)
                    .sum();
                d -= self.q.diversity_weight * push / pairs;
            }
            g[k] = d * mad;
        }
        g
    }

    fn categorical_pass(&self, all: &mut [Vec<f64>]) {
        for j in 0..all.len() {
            for k in self.problem.mutable().collect::<Vec<_>>() {
                let Axis::Discrete { levels } = self.problem.axes[k] else {
                    continue;
                };
                let current = all[j][k];
                let mut best = (self.objective(all, j, &all[j]), current);
                for l in 0..levels {
                    let level = l as f64;
                    if level == current {
                        continue;
                    }
                    let mut trial = all[j].clone();
                    trial[k] = level;
                    let value = self.objective(all, j, &trial);
                    if value < best.0 - 1e-12 {
                        best = (value, level);
                    }
                }
                all[j][k] = best.1;
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs the joint optimizer and returns the raw candidates (valid or not).
pub(crate) fn optimize(problem: &Problem<'_>, q: &CounterfactualQuery) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut all: Vec<Vec<f64>> = (0..q.k)
        .map(|j| {
            let mut v = problem.x.clone();
            if j > 0 {
                for (k, axis) in problem.axes.iter().enumerate() {
                    match *axis {
                        Axis::Continuous { mad, .. } => v[k] += noise.sample(&mut rng) * mad,
                        Axis::Discrete { levels } if levels > 0 && rng.random::<f64>() < 0.25 => {
                            v[k] = rng.random_range(0..levels) as f64;
                        }
                        _ => {}
                    }
                }
                problem.project(&mut v);
            }
            v
        })
        .collect();
    let cands = Candidates { problem, q };
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let dim = problem.x.len();
    let mut m = vec![vec![0.0; dim]; q.k];
    let mut s = vec![vec![0.0; dim]; q.k];
    for step in 1..=q.max_iterations {
        if step % CATEGORICAL_EVERY == 1 {
            cands.categorical_pass(&mut all);
        }
        let grads: Vec<Vec<f64>> = (0..all.len()).map(|j| cands.gradient(&all, j)).collect();
        let c1 = 1.0 - beta1.powi(step as i32);
        let c2 = 1.0 - beta2.powi(step as i32);
        for (j, g) in grads.iter().enumerate() {
            for (k, axis) in problem.axes.iter().enumerate() {
                let Axis::Continuous { mad, .. } = *axis else {
                    continue;
                };
                m[j][k] = beta1 * m[j][k] + (1.0 - beta1) * g[k];
                s[j][k] = beta2 * s[j][k] + (1.0 - beta2) * g[k] * g[k];
                let delta = q.learning_rate * (m[j][k] / c1) / ((s[j][k] / c2).sqrt() + eps);
                all[j][k] -= delta * mad;
            }
            problem.project(&mut all[j]);
        }
    }
    cands.categorical_pass(&mut all);
    // Candidates still short of the target chase validity alone; refinement
    // pulls them back toward the original afterwards.
    let chase = CounterfactualQuery {
        proximity_weight: 0.0,
        diversity_weight: 0.0,
        ..q.clone()
    };
    let solo = Candidates { problem, q: &chase };
    for v in all.iter_mut() {
        if problem.valid(v) {
            continue;
        }
        let mut one = vec![v.clone()];
        let (mut m1, mut s1) = (vec![0.0; dim], vec![0.0; dim]);
        for step in 1..=q.max_iterations {
            if problem.valid(&one[0]) && problem.side(&one[0]) >= q.margin {
                break;
            }
            let g = solo.gradient(&one, 0);
            let c1 = 1.0 - beta1.powi(step as i32);
            let c2 = 1.0 - beta2.powi(step as i32);
            for (k, axis) in problem.axes.iter().enumerate() {
                let Axis::Continuous { mad, .. } = *axis else {
                    continue;
                };
                m1[k] = beta1 * m1[k] + (1.0 - beta1) * g[k];
                s1[k] = beta2 * s1[k] + (1.0 - beta2) * g[k] * g[k];
                one[0][k] -= q.learning_rate * (m1[k] / c1) / ((s1[k] / c2).sqrt() + eps) * mad;
            }
            problem.project(&mut one[0]);
            if step % CATEGORICAL_EVERY == 0 {
                solo.categorical_pass(&mut one);
            }
        }
        *v = one.pop().expect("one candidate");
    }
    all
}

/// Every minimal single-feature counterfactual, one per mutable feature.
pub(crate) fn single_feature_flips(problem: &Problem<'_>) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for j in problem.mutable().collect::<Vec<_>>() {
        let mut v = problem.x.clone();
        // Start from any valid value on this axis.
        if let Some(value) = problem.closest_valid_1d(&v, j) {
            v[j] = value;
            if problem.valid(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Random points of the mutable box, used as extra starting points.
pub const RANDOM_PROBES: usize = 512;

fn random_probes(problem: &Problem<'_>, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut valid: Vec<Vec<f64>> = (0..RANDOM_PROBES)
        .map(|_| {
            let mut v = problem.x.clone();
            for (k, axis) in problem.axes.iter().enumerate() {
                match *axis {
                    Axis::Continuous { lo, hi, .. } => v[k] = rng.random_range(lo..=hi),
                    Axis::Discrete { levels } if levels > 0 => v[k] = rng.random_range(0..levels) as f64,
                    _ => {}
                }
            }
            v
        })
        .filter(|v| problem.valid(v))
        .collect();
    valid.sort_by(|a, b| problem.distance(a).total_cmp(&problem.distance(b)));
    valid.truncate(4);
    valid
}

/// Refines candidates toward minimal distance, nearest first.
pub(crate) fn refine(problem: &Problem<'_>, mut raw: Vec<Vec<f64>>, q: &CounterfactualQuery) -> Vec<Vec<f64>> {
    raw.extend(random_probes(problem, q.seed));
    let mut pool: Vec<Vec<f64>> = Vec::new();
    for v in raw {
        if !problem.valid(&v) {
            continue;
        }
        let v = problem.segment_shrink(&v);
        pool.push(problem.shrink(&v));
    }
    pool.extend(single_feature_flips(problem));
    pool.sort_by(|a, b| problem.distance(a).total_cmp(&problem.distance(b)));
    if let Some(first) = pool.first().cloned() {
        let improved = problem.pairwise(&first, q.pairwise_grid);
        if problem.valid(&improved) {
            pool.insert(0, improved);
        }
    }
    pool.sort_by(|a, b| problem.distance(a).total_cmp(&problem.distance(b)));
    let enc = &problem.model.encoder;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in pool {
        if out.iter().any(|o| super::cf_distance(o, &v, enc) < 1e-6) {
            continue;
        }
        out.push(v);
    }
    out
}
