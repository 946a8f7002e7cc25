//! Single points of failure: a model leaning on one feature flips when that
//! feature alone moves; a model spreading its weight does not.

use xai_assure::counterfactual::{robustness_score, CounterfactualQuery};
use xai_assure::data::{DataSchema, Dataset, FeatureSpec, Instance};
use xai_assure::model::{InputEncoder, ModelArchitecture, TrainedModel};

fn main() -> xai_assure::Result<()> {
    let schema = DataSchema::new(vec![
        FeatureSpec::continuous("a", "u", -3.0, 3.0, true),
        FeatureSpec::continuous("b", "u", -3.0, 3.0, true),
        FeatureSpec::continuous("c", "u", -3.0, 3.0, true),
    ])?;
    // A regular grid: every feature has mean 0 and standard deviation 2.
    let mut rows = Vec::new();
    for a in -3..=3 {
        for b in -3..=3 {
            for c in -3..=3 {
                let v = vec![a as f64, b as f64, c as f64];
                let id = rows.len();
                rows.push(Instance::complete(&format!("r{id}"), &format!("p{id}"), v, u8::from(a + b + c > 0)));
            }
        }
    }
    let ds = Dataset::new(schema.clone(), rows)?;
    let encoder = InputEncoder::fit(&ds)?;
    let arch = ModelArchitecture::logreg(encoder.width);

    // Logit weights on the standardized inputs, then the bias.
    let dominant = TrainedModel::from_parameters(arch.clone(), vec![4.0, 0.1, 0.1, 0.5], encoder.clone(), 0.0, "")?;
    let balanced = TrainedModel::from_parameters(arch, vec![1.0, 1.0, 1.0, 3.5], encoder, 0.0, "")?;

    // Records near the centre: a single balanced feature cannot outweigh the
    // other two plus the bias.
    let sample: Vec<&Instance> = ds
        .instances
        .iter()
        .filter(|i| i.values.iter().all(|v| v.unwrap().abs() <= 1.0))
        .collect();
    let q = CounterfactualQuery::default();
    for (name, m) in [("dominant", &dominant), ("balanced", &balanced)] {
        let r = robustness_score(m, &schema, &sample, &q, 101)?;
        println!(
            "{name:<9} score {}  SPOF witnesses {}  no counterfactual {}",
            r.score.map_or("n/a".into(), |s| format!("{s:.3}")),
            r.spof_witnesses.len(),
            r.no_counterfactual.len()
        );
        for w in r.spof_witnesses.iter().take(3) {
            println!("    {} flips when {} goes {:.2} -> {:.2}", w.instance_id, w.feature, w.original_value, w.flipping_value);
        }
    }
    Ok(())
}
