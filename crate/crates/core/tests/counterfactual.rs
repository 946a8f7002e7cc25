mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use xai_assure::counterfactual::{
    cf_distance, generate_counterfactuals, grid_oracle, min_features_changed, robustness_score, spof_check, CfStatus,
    CfTable, CfTarget, CounterfactualQuery, UNCHANGED,
};
use xai_assure::data::{default_weaning_schema, DataSchema, FeatureSpec, Instance};
use xai_assure::model::{InputEncoder, ModelArchitecture, TrainedModel};
use xai_assure::Error;

use common::{cf_toy, grid_dataset, linear, sigmoid, toy_dataset};

#[test]
fn distance_examples() {
    let schema = DataSchema::new(vec![
        FeatureSpec::continuous("x", "u", -10.0, 10.0, true),
        FeatureSpec::categorical("mode", &["a", "b", "c"], true),
    ])
    .unwrap();
    // MAD of {0, 1, 2, 3, 4} around the median 2 is 1; scale it to 3.
    let rows: Vec<Vec<f64>> = [0.0, 3.0, 6.0, 9.0, 12.0].iter().map(|&v| vec![v, 0.0]).collect();
    let enc = InputEncoder::fit_rows(&schema, &rows).unwrap();
    let mad = enc.features[0].mad;
    assert!((mad - 3.0).abs() < 1e-12);
    let x = [5.0, 1.0];
    assert_eq!(cf_distance(&x, &x, &enc), 0.0);
    assert_eq!(cf_distance(&x, &[5.0, 2.0], &enc), 1.0);
    assert!((cf_distance(&x, &[5.0 + 2.0 * mad, 1.0], &enc) - 2.0).abs() < 1e-12);
    assert!((cf_distance(&x, &[5.0 - 2.0 * mad, 0.0], &enc) - 3.0).abs() < 1e-12);
}

#[test]
fn features_changed_examples() {
    let schema = default_weaning_schema();
    let ix = |n: &str| schema.index_of(n).unwrap();
    let level = |f: &str, v: &str| schema.feature(f).unwrap().level_index(v).unwrap() as f64;
    // The published example patient and its first counterfactual.
    let mut original = vec![0.0; schema.len()];
    for (f, v) in [
        ("Age", 78.2),
        ("Admission Weight", 86.5),
        ("Heart Rate", 119.0),
        ("Respiratory Rate", 24.0),
        ("SpO2", 98.0),
        ("Inspired O2 Fraction", 100.0),
        ("PEEP set", 10.0),
        ("Mean Airway Pressure", 14.0),
        ("Tidal Volume (observed)", 541.0),
        ("PH (Arterial)", 7.46),
        ("Respiratory Rate (Spont)", 0.0),
        ("Richmond-RAS Scale", -1.0),
        ("Peak Insp. Pressure", 21.0),
        ("O2 Flow", 5.0),
        ("Plateau Pressure", 19.0),
        ("Arterial O2 pressure", 124.0),
        ("Arterial CO2 Pressure", 33.0),
        ("Blood Pressure (systolic)", 101.0),
        ("Blood Pressure (diastolic)", 65.0),
        ("Blood Pressure (mean)", 76.0),
    ] {
        original[ix(f)] = v;
    }
    original[ix("Ethnicity")] = level("Ethnicity", "White");
    original[ix("Gender")] = level("Gender", "Female");
    original[ix("Spontaneous breathing trials")] = level("Spontaneous breathing trials", "No result");
    original[ix("Ventilator Mode")] = level("Ventilator Mode", "CMV/ASSIST/AutoFlow");
    let mut cf1 = original.clone();
    cf1[ix("Respiratory Rate")] = 26.0;
    cf1[ix("PEEP set")] = 5.0;
    cf1[ix("Arterial O2 pressure")] = 108.0;
    cf1[ix("Spontaneous breathing trials")] = level("Spontaneous breathing trials", "Successfully Completed");
    cf1[ix("Ventilator Mode")] = level("Ventilator Mode", "PCV+");
    assert_eq!(min_features_changed(&original, &original, &schema), 0);
    assert_eq!(min_features_changed(&original, &cf1, &schema), 5);

    let mut one = original.clone();
    one[ix("Heart Rate")] += 1e-6;
    assert_eq!(min_features_changed(&original, &one, &schema), 1);
    one[ix("Heart Rate")] = original[ix("Heart Rate")] + 1e-10;
    assert_eq!(min_features_changed(&original, &one, &schema), 0);
}

/// One feature on [-3, 3] with mean 0 and std 2; the logit is `a - 0.5`.
fn monotone_1d() -> (DataSchema, TrainedModel) {
    let ds = grid_dataset(1);
    let m = linear(&ds, &[2.0], -0.5, 0.0);
    (ds.schema.clone(), m)
}

#[test]
fn already_on_target_side() {
    let (schema, m) = monotone_1d();
    let x = Instance::complete("x", "p", vec![2.0], 1);
    let q = CounterfactualQuery {
        target: CfTarget::Class(1),
        ..Default::default()
    };
    let set = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
    assert_eq!(set.status, CfStatus::AlreadyTarget);
    assert_eq!(set.examples.len(), 1);
    assert_eq!(set.examples[0].distance, 0.0);
    assert_eq!(set.examples[0].values, vec![2.0]);
    assert!(set.examples[0].changed.is_empty());
    assert!(!set.warnings.is_empty());
}

#[test]
fn no_mutable_features_is_an_error() {
    let (schema, m) = monotone_1d();
    let x = Instance::complete("x", "p", vec![-2.0], 0);
    let q = CounterfactualQuery {
        mutability_overrides: BTreeMap::from([("x0".to_string(), false)]),
        ..Default::default()
    };
    assert!(matches!(generate_counterfactuals(&m, &schema, &x, &q), Err(Error::Config(_))));
}

#[test]
fn oracle_on_constant_model() {
    let ds = grid_dataset(2);
    let m = linear(&ds, &[0.0, 0.0], 9f64.ln(), 0.0);
    let x = Instance::complete("x", "p", vec![0.0, 0.0], 1);
    let q = CounterfactualQuery::default();
    assert!(grid_oracle(&m, &ds.schema, &x, 51, &q).unwrap().is_none());
    let set = generate_counterfactuals(&m, &ds.schema, &x, &q).unwrap();
    assert_eq!(set.status, CfStatus::NotFound);
    assert!(set.examples.is_empty());
    assert!(spof_check(&m, &ds.schema, &x, 101, &q).unwrap().is_empty());
}

#[test]
fn oracle_finds_the_boundary() {
    let (schema, m) = monotone_1d();
    let x = Instance::complete("x", "p", vec![-2.0], 0);
    let q = CounterfactualQuery::default();
    for res in [11, 61, 201] {
        let step = 6.0 / (res - 1) as f64;
        let o = grid_oracle(&m, &schema, &x, res, &q).unwrap().unwrap();
        let a = o.values[0];
        assert!(a >= 0.5 && a - 0.5 <= step, "res {res}: {a}");
        assert!(o.probability >= 0.5);
        assert_eq!(o.grid_points, res + 1);
    }
    // The optimizer reaches the boundary more closely than any grid.
    let set = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
    let a = set.nearest().unwrap().values[0];
    assert!((a - 0.5).abs() < 1e-6, "{a}");
    assert!(m.logit_encoded(&m.encoder.encode(&[a])) >= 0.0);
}

#[test]
fn oracle_guard() {
    let ds = grid_dataset(4);
    let m = linear(&ds, &[1.0, 1.0, 1.0, 1.0], 0.0, 0.0);
    let x = Instance::complete("x", "p", vec![-1.0; 4], 0);
    let q = CounterfactualQuery::default();
    assert!(matches!(grid_oracle(&m, &ds.schema, &x, 11, &q), Err(Error::Config(_))));
    let mut fixed = q.clone();
    fixed.mutability_overrides.insert("x3".into(), false);
    assert!(grid_oracle(&m, &ds.schema, &x, 11, &fixed).unwrap().is_some());
}

#[test]
fn optimizer_never_beats_the_oracle() {
    for seed in 0..12 {
        let (schema, m, x) = cf_toy(seed);
        let q = CounterfactualQuery {
            seed,
            ..Default::default()
        };
        let set = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
        if set.status == CfStatus::AlreadyTarget {
            continue;
        }
        let (Some(e), Some(o)) = (set.nearest(), grid_oracle(&m, &schema, &x, 201, &q).unwrap()) else {
            continue;
        };
        // The grid cannot represent the exact boundary, so the optimizer
        // may undercut it by at most one grid cell per axis.
        let cell: f64 = m.encoder.features[..2].iter().map(|f| 20.0 / 200.0 / f.mad).sum();
        assert!(e.distance >= o.distance - cell, "seed {seed}: {} vs {}", e.distance, o.distance);
    }
}

#[test]
fn returned_examples_honour_the_contract() {
    for seed in 0..10 {
        let (schema, m, x) = cf_toy(seed);
        let q = CounterfactualQuery {
            seed,
            ..Default::default()
        };
        let set = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
        assert!(set.examples.len() <= q.k);
        let p0 = set.original_probability;
        for w in set.examples.windows(2) {
            assert!(w[0].distance <= w[1].distance);
        }
        for e in &set.examples {
            let p = m.proba_encoded(&m.encoder.encode(&e.values));
            assert!((p - e.probability).abs() <= 1e-12);
            if set.status != CfStatus::AlreadyTarget {
                assert!(e.valid);
                assert_eq!(u8::from(p >= 0.5), set.target_class);
                assert_ne!(u8::from(p0 >= 0.5), set.target_class);
            }
            assert_eq!(e.values[2].to_bits(), set.original[2].to_bits());
            assert!(!e.changed.iter().any(|c| c == "c"));
            assert!(e.values.iter().all(|v| (-10.0..=10.0).contains(v)));
            assert!((cf_distance(&set.original, &e.values, &m.encoder) - e.distance).abs() < 1e-12);
        }
        if !set.examples.is_empty() && set.status != CfStatus::AlreadyTarget {
            let expected = if set.examples.len() == q.k { CfStatus::Found } else { CfStatus::Partial };
            assert_eq!(set.status, expected);
        }
    }
}

#[test]
fn categorical_counterfactuals() {
    let schema = DataSchema::new(vec![
        FeatureSpec::continuous("x", "u", -3.0, 3.0, true),
        FeatureSpec::categorical("mode", &["a", "b", "c"], true),
        FeatureSpec::categorical("site", &["north", "south"], false),
    ])
    .unwrap();
    let rows: Vec<(Vec<f64>, u8)> = (0..30)
        .map(|i| (vec![(i % 7) as f64 - 3.0, (i % 3) as f64, (i % 2) as f64], u8::from(i % 2 == 0)))
        .collect();
    let ds = toy_dataset(&schema, rows);
    let enc = InputEncoder::fit(&ds).unwrap();
    // Encoded columns: x, mode a/b/c, site north/south. Mode c alone flips.
    let params = vec![0.1, 0.0, 0.0, 4.0, 0.0, 0.0, -1.0];
    let m = TrainedModel::from_parameters(ModelArchitecture::logreg(enc.width), params, enc, 0.0, "").unwrap();
    let x = Instance::complete("x", "p", vec![0.0, 0.0, 1.0], 0);
    let q = CounterfactualQuery::default();
    let set = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
    let best = set.nearest().unwrap();
    assert_eq!(best.values, vec![0.0, 2.0, 1.0]);
    assert_eq!(best.changed, vec!["mode".to_string()]);
    assert_eq!(best.distance, 1.0);
    let o = grid_oracle(&m, &schema, &x, 21, &q).unwrap().unwrap();
    assert_eq!(o.distance, 1.0);

    let table = CfTable::new(&set, &schema, &m);
    assert_eq!(table.rows.len(), 3);
    assert_eq!(table.rows[1].original, "a");
    assert_eq!(table.rows[1].counterfactuals[0], "c");
    assert_eq!(table.rows[2].counterfactuals[0], UNCHANGED);
    let csv = table.to_csv();
    assert!(csv.starts_with("feature,original,cf1"));
    assert!(csv.lines().last().unwrap().starts_with("Predicted outcome,"));
}

#[test]
fn generation_is_deterministic() {
    let (schema, m, x) = cf_toy(3);
    let q = CounterfactualQuery::default();
    let a = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
    let b = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
    assert_eq!(a, b);
}

#[test]
fn spof_examples() {
    let ds = grid_dataset(3);
    let dominant = linear(&ds, &[4.0, 0.1, 0.1], 0.5, 0.0);
    let x = Instance::complete("x", "p", vec![-1.0, 0.0, 0.0], 0);
    let q = CounterfactualQuery::default();
    let w = spof_check(&dominant, &ds.schema, &x, 101, &q).unwrap();
    // Only a moves far enough: the logit is 2a + 0.05(b + c) + 0.5.
    assert_eq!(w.len(), 1);
    assert_eq!(w[0].feature, "x0");
    let boundary = -0.25;
    assert!(w[0].flipping_value >= boundary && w[0].flipping_value - boundary <= 0.06);
    // Witnesses reproduce.
    for m in [&dominant] {
        for wi in &w {
            let j = ds.schema.index_of(&wi.feature).unwrap();
            let mut v = vec![-1.0, 0.0, 0.0];
            v[j] = wi.flipping_value;
            let p = m.proba_encoded(&m.encoder.encode(&v));
            assert!(p >= 0.5);
            assert_eq!(p, wi.probability);
        }
    }
}

#[test]
fn spof_is_invariant_to_logit_scale() {
    let ds = grid_dataset(3);
    for (w, b) in [([4.0, 0.1, 0.1], 0.5), ([1.0, -2.0, 0.5], 0.3), ([0.7, 0.7, 0.7], -0.2)] {
        let m = linear(&ds, &w, b, 0.0);
        let doubled = linear(&ds, &w.map(|v| 2.0 * v), 2.0 * b, 0.0);
        for x in ds.instances.iter().step_by(17) {
            let q = CounterfactualQuery::default();
            let a = spof_check(&m, &ds.schema, x, 101, &q).unwrap();
            let c = spof_check(&doubled, &ds.schema, x, 101, &q).unwrap();
            let key = |v: &[xai_assure::counterfactual::SpofWitness]| {
                v.iter().map(|w| (w.feature.clone(), w.flipping_value.to_bits())).collect::<Vec<_>>()
            };
            assert_eq!(key(&a), key(&c));
        }
    }
}

#[test]
fn robustness_of_already_flipped_sample() {
    let ds = grid_dataset(2);
    let m = linear(&ds, &[1.0, 1.0], 0.0, 0.0);
    let q = CounterfactualQuery {
        target: CfTarget::Class(1),
        ..Default::default()
    };
    let sample: Vec<&Instance> = ds.instances.iter().filter(|i| i.label == 1).collect();
    let r = robustness_score(&m, &ds.schema, &sample, &q, 101).unwrap();
    assert_eq!(r.score, Some(0.0));
    assert!(r.no_counterfactual.is_empty());
    assert_eq!(r.min_features_histogram.get(&0), Some(&sample.len()));
    assert!(robustness_score(&m, &ds.schema, &[], &q, 101).is_err());
}

#[test]
fn robustness_pairs_and_unreachable_instances() {
    let ds = grid_dataset(3);
    let dominant = linear(&ds, &[4.0, 0.1, 0.1], 0.5, 0.0);
    let balanced = linear(&ds, &[1.0, 1.0, 1.0], 3.5, 0.0);
    let sample: Vec<&Instance> = ds
        .instances
        .iter()
        .filter(|i| i.values.iter().all(|v| v.unwrap().abs() <= 1.0))
        .collect();
    let q = CounterfactualQuery::default();
    let rd = robustness_score(&dominant, &ds.schema, &sample, &q, 101).unwrap();
    let rb = robustness_score(&balanced, &ds.schema, &sample, &q, 101).unwrap();
    assert!(!rd.spof_witnesses.is_empty());
    assert!(rb.spof_witnesses.is_empty());
    assert!(rd.score.unwrap() < rb.score.unwrap());
    assert_eq!(rd.instances.len(), sample.len());
    let counted: usize = rd.min_features_histogram.values().sum();
    assert_eq!(counted + rd.no_counterfactual.len(), sample.len());

    // A model that can never leave class 1 has no counterfactuals.
    let stuck = linear(&ds, &[0.0, 0.0, 0.0], 5.0, 0.0);
    let r = robustness_score(&stuck, &ds.schema, &sample, &q, 101).unwrap();
    assert_eq!(r.score, None);
    assert_eq!(r.no_counterfactual.len(), sample.len());
    assert!((sigmoid(5.0) - stuck.proba_encoded(&stuck.encoder.encode(&[0.0; 3]))).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn immutables_survive_any_query(seed in 0u64..1000, k in 1usize..5, prox in 0.0f64..2.0, div in 0.0f64..2.0) {
        let (schema, m, x) = cf_toy(seed);
        let q = CounterfactualQuery { seed, k, proximity_weight: prox, diversity_weight: div, max_iterations: 120, ..Default::default() };
        let set = generate_counterfactuals(&m, &schema, &x, &q).unwrap();
        for e in &set.examples {
            prop_assert_eq!(e.values[2].to_bits(), set.original[2].to_bits());
            let z = m.logit_encoded(&m.encoder.encode(&e.values));
            prop_assert_eq!(e.valid, u8::from(z >= 0.0) == set.target_class);
            if set.status != CfStatus::AlreadyTarget {
                prop_assert!(e.valid);
            }
        }
    }
}
