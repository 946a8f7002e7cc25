//! Which training records pushed a prediction where it is? Trains with and
//! without the extubation-failure patients, picks a test record the two
//! models disagree on, and ranks training records by influence.
//!
//! Positive influence means removing the record would lower the test loss
//! (harmful); negative means it helps.
//!
//! cargo run --release --example influence_debugging

use xai_assure::data::{default_weaning_schema, generate_cohort, CohortConfig, Split};
use xai_assure::influence::{cohort_influence_summary, top_influencers, IhvpConfig};
use xai_assure::model::{train, train_with_encoder, ModelArchitecture, TrainingConfig};

fn main() -> xai_assure::Result<()> {
    let cfg = CohortConfig {
        n_patients: 150,
        mislabel_bias_failure_cohort: 0.6,
        ..CohortConfig::default()
    };
    let ds = generate_cohort(&cfg, &default_weaning_schema())?;
    let training = TrainingConfig::newton(1e-3, 1);
    let width = xai_assure::model::InputEncoder::fit(&ds)?.width;
    let arch = ModelArchitecture::logreg(width);

    let with = train(&ds, &arch, &training)?;
    let clean = ds.filter(|i, s| s == Split::Test || !i.extubation_failure);
    let without = train_with_encoder(&clean, &arch, &training, with.encoder.clone())?;

    let mut discordant = None;
    for x in ds.test() {
        let (a, b) = (with.predict_proba(x)?, without.predict_proba(x)?);
        if (a >= 0.5) != (b >= 0.5) {
            discordant = Some((x, a, b));
            break;
        }
    }
    let Some((x, a, b)) = discordant else {
        println!("the two models agree on every test record");
        return Ok(());
    };
    println!("{}: p(remain intubated) {a:.3} with the failure cohort, {b:.3} without", x.id);

    let ihvp = IhvpConfig::default();
    let report = top_influencers(&with, &ds, &x.id, 30, &ihvp)?;
    println!("top 10 of {} training records:", report.train_size);
    for e in report.entries.iter().take(10) {
        println!(
            "  #{:<2} {}  {:+.4e}  {:?}{}",
            e.rank,
            e.train_id,
            e.value,
            e.gloss,
            if e.extubation_failure { "  (failure cohort)" } else { "" }
        );
    }
    let flag = ds.schema.cohort_flags.extubation_failure.clone();
    let s = cohort_influence_summary(&with, &ds, &x.id, &flag, &ihvp)?;
    println!(
        "failure cohort: {} records, {} harmful, {} helpful, mean {:+.3e}",
        s.cohort_size, s.count_harmful, s.count_helpful, s.mean
    );
    Ok(())
}
