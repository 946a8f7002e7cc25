//! Logistic regression against an MLP and a 1-D convolution on the same
//! split, with a shuffled-label control that should land near 0.5.
//!
//! cargo run --release --example model_selection

use xai_assure::data::{default_weaning_schema, generate_cohort, CohortConfig};
use xai_assure::model::{compare_models, CompareOptions, InputEncoder, ModelArchitecture, TrainingConfig};

fn main() -> xai_assure::Result<()> {
    let cfg = CohortConfig {
        n_patients: 300,
        mislabel_bias_failure_cohort: 0.0,
        ..CohortConfig::default()
    };
    let ds = generate_cohort(&cfg, &default_weaning_schema())?;
    let width = InputEncoder::fit(&ds)?.width;
    let adam = TrainingConfig {
        epochs: 100,
        ..TrainingConfig::default()
    };
    let candidates = vec![
        (ModelArchitecture::logreg(width), TrainingConfig::newton(1e-3, 1)),
        (ModelArchitecture::default_mlp(width), adam.clone()),
        (ModelArchitecture::default_conv1d(width), adam),
    ];
    let options = CompareOptions {
        control: Some(TrainingConfig::newton(1e-3, 1)),
        ..CompareOptions::default()
    };
    let report = compare_models(&ds, &candidates, &options)?;
    for m in &report.models {
        println!(
            "{:<8} AUC {:.3}  accuracy {:.3}  {} parameters  {:?}",
            m.model, m.auc, m.accuracy, m.parameter_count, m.interpretability
        );
    }
    if let Some(c) = &report.random_label_control {
        println!("control  AUC {:.3} (mean of {})", c.mean_auc, c.repeats);
    }
    println!("{}", report.trade_off.note);
    print!("{}", report.auc_csv());
    Ok(())
}
