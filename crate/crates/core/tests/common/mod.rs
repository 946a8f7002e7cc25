#![allow(dead_code)]

use xai_assure::data::{default_weaning_schema, generate_cohort, CohortConfig, DataSchema, Dataset, FeatureSpec, Instance};
use xai_assure::model::{
    train, Activation, InputEncoder, ModelArchitecture, TrainedModel, TrainingConfig,
};

pub fn cohort(n_patients: usize, seed: u64) -> Dataset {
    let cfg = CohortConfig {
        n_patients,
        seed,
        ..CohortConfig::default()
    };
    generate_cohort(&cfg, &default_weaning_schema()).unwrap()
}

/// Continuous, mutable features on [-3, 3].
pub fn toy_schema(names: &[&str]) -> DataSchema {
    DataSchema::new(names.iter().map(|n| FeatureSpec::continuous(n, "u", -3.0, 3.0, true)).collect()).unwrap()
}

pub fn toy_dataset(schema: &DataSchema, rows: Vec<(Vec<f64>, u8)>) -> Dataset {
    let instances = rows
        .into_iter()
        .enumerate()
        .map(|(i, (v, y))| Instance::complete(&format!("r{i:04}"), &format!("p{i:04}"), v, y))
        .collect();
    Dataset::new(schema.clone(), instances).unwrap()
}

/// Every point of {-3, ..., 3}^d; each feature has mean 0 and std 2.
pub fn grid_dataset(d: usize) -> Dataset {
    let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = toy_schema(&refs);
    let mut rows = Vec::new();
    let total = 7usize.pow(d as u32);
    for k in 0..total {
        let mut rest = k;
        let v: Vec<f64> = (0..d)
            .map(|_| {
                let digit = rest % 7;
                rest /= 7;
                digit as f64 - 3.0
            })
            .collect();
        let y = u8::from(v.iter().sum::<f64>() > 0.0);
        rows.push((v, y));
    }
    toy_dataset(&schema, rows)
}

/// Logistic regression with hand-set weights on the standardized input.
pub fn linear(ds: &Dataset, weights: &[f64], bias: f64, l2: f64) -> TrainedModel {
    let encoder = InputEncoder::fit(ds).unwrap();
    let mut values = weights.to_vec();
    values.push(bias);
    TrainedModel::from_parameters(ModelArchitecture::logreg(encoder.width), values, encoder, l2, ds.schema.content_hash())
        .unwrap()
}

pub fn zoo_architectures(width: usize) -> Vec<ModelArchitecture> {
    vec![
        ModelArchitecture::logreg(width),
        ModelArchitecture::default_mlp(width),
        ModelArchitecture::mlp(width, &[8, 4], Activation::Sigmoid),
        ModelArchitecture::default_conv1d(width),
    ]
}

/// Every architecture, briefly trained.
pub fn zoo(ds: &Dataset, seed: u64) -> Vec<TrainedModel> {
    let width = InputEncoder::fit(ds).unwrap().width;
    let cfg = TrainingConfig {
        epochs: 15,
        seed,
        ..TrainingConfig::default()
    };
    zoo_architectures(width).iter().map(|a| train(ds, a, &cfg).unwrap()).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub const CONVEX_FEATURES: [&str; 6] = [
    "PEEP set",
    "Inspired O2 Fraction",
    "Heart Rate",
    "Richmond-RAS Scale",
    "Spontaneous breathing trials",
    "Respiratory Rate (Spont)",
];

/// Logreg on 40 training records over six features, converged with
/// Newton, and its highest-loss test record.
pub fn convex_problem() -> (Dataset, TrainedModel, String) {
    use xai_assure::data::Split;
    let cfg = CohortConfig {
        n_patients: 30,
        ..CohortConfig::default()
    };
    let full = generate_cohort(&cfg, &default_weaning_schema())
        .unwrap()
        .project(&CONVEX_FEATURES)
        .unwrap();
    let mut kept = 0;
    let ds = full.filter(|_, s| {
        kept += usize::from(s == Split::Train);
        s == Split::Test || kept <= 40
    });
    let width = InputEncoder::fit(&ds).unwrap().width;
    let m = train(&ds, &ModelArchitecture::logreg(width), &TrainingConfig::newton(1e-3, 7)).unwrap();
    let test_id = xai_assure::pipeline::highest_loss_test(&m, &ds).unwrap();
    (ds, m, test_id)
}

/// Seeded counterfactual toy: features a and b mutable, c immutable, all on
/// [-10, 10]. Even seeds give a logreg, odd seeds a ReLU MLP, both with
/// random parameters. Returns the schema, the model and the first row.
pub fn cf_toy(seed: u64) -> (DataSchema, TrainedModel, Instance) {
    use rand::{Rng, SeedableRng};
    let schema = DataSchema::new(vec![
        FeatureSpec::continuous("a", "u", -10.0, 10.0, true),
        FeatureSpec::continuous("b", "u", -10.0, 10.0, true),
        FeatureSpec::continuous("c", "u", -10.0, 10.0, false),
    ])
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random_range(-6.0..6.0)).collect()).collect();
    let enc = InputEncoder::fit_rows(&schema, &rows).unwrap();
    let arch = if seed % 2 == 0 {
        ModelArchitecture::logreg(3)
    } else {
        ModelArchitecture::mlp(3, &[6], Activation::Relu)
    };
    let params: Vec<f64> = (0..arch.parameter_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let m = TrainedModel::from_parameters(arch, params, enc, 0.0, "toy").unwrap();
    let x = Instance::complete(&format!("x{seed}"), "p", rows[0].clone(), 0);
    (schema, m, x)
}
