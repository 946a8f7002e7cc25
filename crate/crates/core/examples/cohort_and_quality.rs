//! Generate the synthetic weaning cohort, then break a few cells and watch
//! the quality checks catch them.
//!
//! cargo run --example cohort_and_quality

use xai_assure::data::{
    default_weaning_schema, generate_cohort, quality_report, CohortConfig, Criterion, QualityConfig,
};

fn main() -> xai_assure::Result<()> {
    let schema = default_weaning_schema();
    let cfg = CohortConfig {
        n_patients: 120,
        ..CohortConfig::default()
    };
    let mut ds = generate_cohort(&cfg, &schema)?;
    let failures = ds.instances.iter().filter(|i| i.extubation_failure).count();
    println!("{} records, {failures} from extubation-failure patients", ds.len());

    let report = quality_report(&ds, &QualityConfig::default())?;
    println!("clean cohort passed: {}", report.passed);

    // A negative heart rate, a missing SpO2 and a diastolic above systolic.
    let hr = schema.index_of("Heart Rate").unwrap();
    let spo2 = schema.index_of("SpO2").unwrap();
    let dia = schema.index_of("Blood Pressure (diastolic)").unwrap();
    ds.instances[0].values[hr] = Some(-5.0);
    for inst in ds.instances.iter_mut().take(40) {
        inst.values[spo2] = None;
    }
    ds.instances[3].values[dia] = Some(250.0);

    let report = quality_report(&ds, &QualityConfig::default())?;
    println!("damaged cohort passed: {}", report.passed);
    for c in Criterion::ALL {
        for f in &report.section(c).findings {
            println!("  {:?} {:?} {}", f.criterion, f.severity, f.description);
        }
    }
    Ok(())
}
