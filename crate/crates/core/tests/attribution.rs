mod common;

use proptest::prelude::*;
use xai_assure::attribution::{
    attribute, deeplift_rescale, exact_shapley, global_importance, gradient_x_input, integrated_gradients,
    local_importance, shapley_fn, AttributionMethod, AttributionOptions, Baseline, Differentiable, Direction,
    integrated_gradients_fn, DEFAULT_SHAPLEY_MAX_FEATURES,
};
use xai_assure::data::{Dataset, Instance, Split};
use xai_assure::grad::OutputTarget;
use xai_assure::model::{Activation, ModelArchitecture, TrainedModel, TrainingConfig};
use xai_assure::Error;

struct Square;

impl Differentiable for Square {
    fn value(&self, x: &[f64]) -> f64 {
        x[0] * x[0]
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0]]
    }
}

struct Product;

impl Differentiable for Product {
    fn value(&self, x: &[f64]) -> f64 {
        x[0] * x[1]
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![x[1], x[0]]
    }
}

fn options() -> AttributionOptions {
    AttributionOptions::default()
}

fn all_methods(m: &TrainedModel, x: &Instance, b: &Baseline) -> Vec<Vec<f64>> {
    AttributionMethod::ALL
        .iter()
        .map(|&method| attribute(m, x, method, b, &options()).unwrap().scores)
        .collect()
}

#[test]
fn linear_model_methods_agree() {
    let ds = common::grid_dataset(3);
    let w = [0.8, -1.1, 0.3];
    let m = common::linear(&ds, &w, 0.4, 0.0);
    for v in [[1.0, 2.0, -3.0], [-2.0, 0.0, 1.0], [3.0, 3.0, 3.0]] {
        let x = Instance::complete("q", "q", v.to_vec(), 0);
        let zeros = Baseline::zeros(&m);
        let gxi = gradient_x_input(&m, &x, &zeros, OutputTarget::Logit).unwrap();
        for k in 0..3 {
            assert!((gxi.scores[k] - w[k] * v[k] / 2.0).abs() < 1e-12);
        }
        let ig = integrated_gradients(&m, &x, &zeros, 7, OutputTarget::Logit).unwrap();
        assert!(ig.residual.unwrap().abs() <= 1e-10);
        for (a, b) in gxi.scores.iter().zip(&ig.scores) {
            assert!((a - b).abs() <= 1e-10);
        }
        let dl = deeplift_rescale(&m, &x, &zeros).unwrap();
        for (a, b) in gxi.scores.iter().zip(&dl.scores) {
            assert!((a - b).abs() <= 1e-10);
        }
        let b = Baseline::custom(&m, vec![0.3, -0.2, 0.9]).unwrap();
        let runs = all_methods(&m, &x, &b);
        for run in &runs[1..] {
            for (a, c) in runs[0].iter().zip(run) {
                assert!((a - c).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn input_at_baseline_scores_zero() {
    let ds = common::cohort(10, 2).project(&common::CONVEX_FEATURES).unwrap();
    for m in common::zoo(&ds, 2) {
        let x = ds.instances[0].clone();
        let b = Baseline::custom(&m, m.encode(&x).unwrap()).unwrap();
        for scores in all_methods(&m, &x, &b) {
            assert!(scores.iter().all(|&s| s == 0.0), "{scores:?}");
        }
    }
}

#[test]
fn integrated_gradients_of_a_square() {
    for steps in [1, 2, 300] {
        let s = integrated_gradients_fn(&Square, &[2.0], &[0.0], steps).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-12);
    }
    assert!(integrated_gradients_fn(&Square, &[2.0], &[0.0], 0).is_err());
}

#[test]
fn shapley_of_a_product() {
    let phi = shapley_fn(&Product, &[1.0, 1.0], &[0.0, 0.0], &[vec![0], vec![1]], 15).unwrap();
    assert!((phi[0] - 0.5).abs() < 1e-15 && (phi[1] - 0.5).abs() < 1e-15);
}

/// Logit = relu(x̃) through one hidden unit.
fn single_relu() -> TrainedModel {
    let schema = common::toy_schema(&["a"]);
    let ds = common::toy_dataset(&schema, vec![(vec![-1.0], 0), (vec![1.0], 1)]);
    let encoder = xai_assure::model::InputEncoder::fit(&ds).unwrap();
    let arch = ModelArchitecture::mlp(1, &[1], Activation::Relu);
    TrainedModel::from_parameters(arch, vec![1.0, 0.0, 1.0, 0.0], encoder, 0.0, schema.content_hash()).unwrap()
}

#[test]
fn deeplift_single_relu() {
    let m = single_relu();
    let x = Instance::complete("q", "q", vec![2.0], 1);
    let r = Baseline::custom(&m, vec![-1.0]).unwrap();
    let v = deeplift_rescale(&m, &x, &r).unwrap();
    assert!((v.scores[0] - 2.0).abs() < 1e-15);
    assert!((v.scores[0] / 3.0 - 2.0 / 3.0).abs() < 1e-15);
    assert!(v.residual.unwrap().abs() < 1e-15);
}

#[test]
fn summation_to_delta_over_zoo() {
    let ds = common::cohort(20, 5);
    let projected = ds.project(&common::CONVEX_FEATURES).unwrap();
    let mut checked = 0;
    for (data, shapley) in [(&ds, false), (&projected, true)] {
        for m in common::zoo(data, 5) {
            let b = Baseline::training_median(&m);
            for x in data.instances.iter().take(50) {
                let dl = attribute(&m, x, AttributionMethod::Deeplift, &b, &options()).unwrap();
                let scale = (dl.output - dl.baseline_output).abs();
                assert!(dl.residual.unwrap().abs() <= 1e-6, "{} deeplift {}", m.architecture.name(), dl.residual.unwrap());
                let ig = attribute(&m, x, AttributionMethod::IntegratedGradients, &b, &options()).unwrap();
                assert!(ig.residual.unwrap().abs() <= 1e-3 * scale + 1e-6, "{} ig {}", m.architecture.name(), ig.residual.unwrap());
                if shapley {
                    let sh = attribute(&m, x, AttributionMethod::Shapley, &b, &options()).unwrap();
                    assert!(sh.residual.unwrap().abs() <= 1e-10);
                }
                checked += 1;
            }
        }
    }
    assert!(checked >= 2 * 4 * 50);
}

#[test]
fn integrated_gradients_converges_in_steps() {
    let ds = common::cohort(20, 6);
    let m = &common::zoo(&ds, 6)[1];
    let b = Baseline::training_median(m);
    for x in ds.instances.iter().take(10) {
        let coarse = integrated_gradients(m, x, &b, 300, OutputTarget::Logit).unwrap();
        let fine = integrated_gradients(m, x, &b, 3000, OutputTarget::Logit).unwrap();
        let delta = (coarse.output - coarse.baseline_output).abs();
        assert!(coarse.residual.unwrap().abs() <= 1e-3 * delta + 1e-6);
        for (a, c) in coarse.scores.iter().zip(&fine.scores) {
            assert!((a - c).abs() <= 1e-3 * delta + 1e-6);
        }
    }
}

#[test]
fn shapley_axioms_on_linear_models() {
    let ds = common::grid_dataset(4);
    // x3 is a dummy; x0 and x1 are exchangeable.
    let m = common::linear(&ds, &[0.7, 0.7, -0.4, 0.0], 0.2, 0.0);
    let x = Instance::complete("q", "q", vec![2.0, 2.0, -1.0, 3.0], 1);
    let b = Baseline::zeros(&m);
    let v = exact_shapley(&m, &x, &b, DEFAULT_SHAPLEY_MAX_FEATURES).unwrap();
    assert!((v.scores[0] - 0.7).abs() < 1e-12);
    assert!((v.scores[0] - v.scores[1]).abs() <= 1e-10);
    assert!((v.scores[2] - 0.2).abs() < 1e-12);
    assert_eq!(v.scores[3], 0.0);

    let full = common::cohort(5, 1);
    let big = &common::zoo(&full, 1)[0];
    let err = exact_shapley(big, &full.instances[0], &Baseline::zeros(big), 15).unwrap_err();
    assert!(matches!(err, Error::Config(ref s) if s.contains("integrated gradients")));
}

#[test]
fn folded_scores_sum_one_hot_components() {
    let ds = common::cohort(10, 4);
    for m in common::zoo(&ds, 4) {
        let b = Baseline::training_median(&m);
        for method in [AttributionMethod::GradientXInput, AttributionMethod::IntegratedGradients, AttributionMethod::Deeplift] {
            let v = attribute(&m, &ds.instances[3], method, &b, &options()).unwrap();
            for (j, f) in m.encoder.features.iter().enumerate() {
                let mut acc = 0.0;
                for s in &v.encoded_scores[f.offset..f.offset + f.width] {
                    acc += *s;
                }
                assert_eq!(acc.to_bits(), v.scores[j].to_bits());
            }
        }
    }
}

#[test]
fn dispatch_and_gloss() {
    let ds = common::cohort(10, 4);
    let m = &common::zoo(&ds, 4)[1];
    let b = Baseline::training_median(m);
    let x = &ds.instances[0];
    let local = local_importance(m, x, "ig", &b, &options()).unwrap();
    let direct = integrated_gradients(m, x, &b, options().ig_steps, OutputTarget::Logit).unwrap();
    assert_eq!(local.attribution, direct);
    for c in &local.contributions {
        assert_eq!(c.direction, Direction::of(c.score));
        if c.score > 0.0 {
            assert_eq!(c.gloss, "toward remain intubated");
        }
    }
    assert!(local_importance(m, x, "lime", &b, &options()).is_err());
}

#[test]
fn high_probability_instance_is_dominated_by_positive_scores() {
    let mut ds = common::cohort(100, 1);
    ds.split_by_patient(0.25, 1).unwrap();
    let width = xai_assure::model::InputEncoder::fit(&ds).unwrap().width;
    let cfg = TrainingConfig {
        epochs: 100,
        ..TrainingConfig::default()
    };
    let m = xai_assure::model::train(&ds, &ModelArchitecture::default_mlp(width), &cfg).unwrap();
    let x = ds
        .test()
        .max_by(|a, b| m.predict_proba(a).unwrap().total_cmp(&m.predict_proba(b).unwrap()))
        .unwrap();
    let b = Baseline::training_median(&m);
    let local = local_importance(&m, x, "deeplift", &b, &options()).unwrap();
    assert!(local.prediction > 0.9);
    assert!(local.positive_total > local.negative_total.abs(), "{} vs {}", local.positive_total, local.negative_total);
}

#[test]
fn global_importance_contract() {
    let ds = common::grid_dataset(3);
    let m = common::linear(&ds, &[1.0, -0.5, 0.0], 0.0, 0.0);
    let b = Baseline::zeros(&m);
    let report = global_importance(&m, &ds, Split::Train, AttributionMethod::Deeplift, &b, &options()).unwrap();
    assert_eq!(report.ranking, ["x0", "x1", "x2"]);
    assert_eq!(report.features[2].mean_abs_score, 0.0);
    assert!(global_importance(&m, &ds, Split::Test, AttributionMethod::Deeplift, &b, &options()).is_err());

    let one = Dataset::new(ds.schema.clone(), vec![ds.instances[17].clone()]).unwrap();
    let g = global_importance(&m, &one, Split::Train, AttributionMethod::IntegratedGradients, &b, &options()).unwrap();
    let l = attribute(&m, &one.instances[0], AttributionMethod::IntegratedGradients, &b, &options()).unwrap();
    for (f, s) in g.features.iter().zip(&l.scores) {
        assert_eq!(f.mean_score, *s);
        assert_eq!(f.mean_abs_score, s.abs());
    }
}

/// Logreg carrying the linear part of the generator's latent rule, with the
/// SBT x alert interaction averaged over the RAS distribution.
fn latent_logreg(ds: &Dataset) -> TrainedModel {
    let encoder = xai_assure::model::InputEncoder::fit(ds).unwrap();
    let mut w = vec![0.0; encoder.width + 1];
    let col = |name: &str| encoder.features.iter().find(|f| f.name == name).unwrap();
    for (name, per_unit) in [
        ("PEEP set", 0.9 / 3.0),
        ("Inspired O2 Fraction", 0.8 / 15.0),
        ("Heart Rate", 0.5 / 15.0),
        ("SpO2", -0.3 / 2.5),
    ] {
        let f = col(name);
        w[f.offset] = per_unit * f.std;
    }
    let p_alert = 0.16 + 0.18 + 0.14;
    let sbt = col("Spontaneous breathing trials");
    w[sbt.offset + 1] = -0.8 - 1.6 * p_alert;
    w[sbt.offset + 2] = 0.8;
    let arch = ModelArchitecture::logreg(encoder.width);
    TrainedModel::from_parameters(arch, w, encoder, 0.0, ds.schema.content_hash()).unwrap()
}

#[test]
fn breathing_trial_is_globally_important() {
    let ds = common::cohort(100, 2);
    let m = latent_logreg(&ds);
    let b = Baseline::training_median(&m);
    let report = global_importance(&m, &ds, Split::Test, AttributionMethod::Deeplift, &b, &options()).unwrap();
    let rank = report.ranking.iter().position(|f| f == "Spontaneous breathing trials").unwrap();
    assert!(rank < 3, "ranking {:?}", report.ranking);
    let mut sorted = report.ranking.clone();
    sorted.sort();
    let mut names: Vec<String> = ds.schema.features.iter().map(|f| f.name.clone()).collect();
    names.sort();
    assert_eq!(sorted, names);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exchangeable_features_share_credit(w in -3.0f64..3.0, v in -3.0f64..3.0, c in -2.0f64..2.0, z in -3.0f64..3.0) {
        let ds = common::grid_dataset(3);
        let m = common::linear(&ds, &[w, w, c], 0.1, 0.0);
        let x = Instance::complete("q", "q", vec![v, v, z], 0);
        for target in [OutputTarget::Logit, OutputTarget::Probability] {
            let opts = AttributionOptions { target, ..options() };
            let s = attribute(&m, &x, AttributionMethod::Shapley, &Baseline::zeros(&m), &opts).unwrap();
            prop_assert!((s.scores[0] - s.scores[1]).abs() <= 1e-10);
            prop_assert!(s.residual.unwrap().abs() <= 1e-10);
        }
    }
}
