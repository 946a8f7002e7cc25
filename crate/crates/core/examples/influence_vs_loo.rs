//! Influence predictions against actual leave-one-out retraining on a small
//! convex problem.

use xai_assure::data::{default_weaning_schema, generate_cohort, CohortConfig, Split};
use xai_assure::influence::{influence_values, loo_from_model, IhvpConfig};
use xai_assure::model::{train, ModelArchitecture, TrainingConfig};
use xai_assure::util::{pearson, spearman};

const FEATURES: [&str; 6] = [
    "PEEP set",
    "Inspired O2 Fraction",
    "Heart Rate",
    "Richmond-RAS Scale",
    "Spontaneous breathing trials",
    "Respiratory Rate (Spont)",
];

fn main() -> xai_assure::Result<()> {
    let cfg = CohortConfig {
        n_patients: 30,
        ..CohortConfig::default()
    };
    let full = generate_cohort(&cfg, &default_weaning_schema())?.project(&FEATURES)?;
    let mut kept = 0;
    let ds = full.filter(|_, s| {
        kept += usize::from(s == Split::Train);
        s == Split::Test || kept <= 40
    });
    let width = xai_assure::model::InputEncoder::fit(&ds)?.width;
    let m = train(&ds, &ModelArchitecture::logreg(width), &TrainingConfig::newton(1e-3, 7))?;
    let test_id = xai_assure::pipeline::highest_loss_test(&m, &ds)?;

    let scores = influence_values(&m, &ds, &test_id, &IhvpConfig::default())?;
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for s in &scores {
        let loo = loo_from_model(&m, &ds, &s.train_id, &test_id)?;
        predicted.push(s.predicted_loss_change);
        actual.push(loo.delta_test_loss);
    }
    for (s, a) in scores.iter().zip(&actual).take(8) {
        println!("{}  predicted {:+.3e}  retrained {:+.3e}", s.train_id, s.predicted_loss_change, a);
    }
    println!(
        "{} removals: Pearson {:.3}, Spearman {:.3}",
        scores.len(),
        pearson(&predicted, &actual),
        spearman(&predicted, &actual)
    );
    Ok(())
}
