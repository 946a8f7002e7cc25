//! Diverse counterfactuals for a patient the model wants to keep intubated,
//! laid out as a table with unchanged cells shown as "-".

use xai_assure::counterfactual::{generate_counterfactuals, CfTable, CounterfactualQuery};
use xai_assure::data::{default_weaning_schema, generate_cohort, CohortConfig};
use xai_assure::model::{train, ModelArchitecture, TrainingConfig};

fn main() -> xai_assure::Result<()> {
    let ds = generate_cohort(&CohortConfig::default(), &default_weaning_schema())?;
    let width = xai_assure::model::InputEncoder::fit(&ds)?.width;
    let m = train(&ds, &ModelArchitecture::default_mlp(width), &TrainingConfig::default())?;

    let mut x = None;
    for inst in ds.test() {
        if m.predict_proba(inst)? >= 0.5 {
            x = Some(inst);
            break;
        }
    }
    let x = x.expect("some test record is predicted to remain intubated");
    let q = CounterfactualQuery::default();
    let set = generate_counterfactuals(&m, &ds.schema, x, &q)?;
    println!("{}: {:?}, p = {:.3}", set.instance_id, set.status, set.original_probability);
    for w in &set.warnings {
        println!("warning: {w}");
    }
    for (i, e) in set.examples.iter().enumerate() {
        println!(
            "CF{}: distance {:.3}, p = {:.3}, changes {}",
            i + 1,
            e.distance,
            e.probability,
            e.changed.join(", ")
        );
    }
    println!();
    print!("{}", CfTable::new(&set, &ds.schema, &m).to_csv());
    Ok(())
}
