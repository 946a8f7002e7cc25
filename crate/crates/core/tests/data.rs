mod common;

use proptest::prelude::*;
use xai_assure::data::{
    check_accuracy, check_balance, default_accuracy_rules, default_weaning_schema, generate_cohort, quality_report,
    CohortConfig, Criterion, DataSchema, Dataset, FeatureSpec, Instance, QualityConfig, Severity,
};

fn config(n_patients: usize, seed: u64) -> CohortConfig {
    CohortConfig {
        n_patients,
        seed,
        ..CohortConfig::default()
    }
}

#[test]
fn table_three_original_blood_pressure_is_consistent() {
    let schema = default_weaning_schema();
    let mut ds = common::cohort(5, 3);
    let sys = schema.index_of("Blood Pressure (systolic)").unwrap();
    let dia = schema.index_of("Blood Pressure (diastolic)").unwrap();
    let mean = schema.index_of("Blood Pressure (mean)").unwrap();
    ds.instances.truncate(1);
    ds.split.truncate(1);
    ds.instances[0].values[sys] = Some(101.0);
    ds.instances[0].values[dia] = Some(65.0);
    ds.instances[0].values[mean] = Some(77.0);
    let rules: Vec<_> = default_accuracy_rules().into_iter().filter(|r| r.left.starts_with("Blood")).collect();
    assert!(check_accuracy(&ds, &rules).unwrap().findings.is_empty());

    ds.instances[0].values[sys] = Some(60.0);
    ds.instances[0].values[dia] = Some(90.0);
    let f = check_accuracy(&ds, &rules).unwrap();
    assert!(f.findings.iter().any(|f| f.severity == Severity::Fail));
}

#[test]
fn default_cohort_passes_quality_gate() {
    let ds = common::cohort(100, 1);
    let report = quality_report(&ds, &QualityConfig::default()).unwrap();
    assert!(report.passed, "{:#?}", report.findings().collect::<Vec<_>>());
    assert_eq!(report.sections.len(), 5);
}

#[test]
fn split_keeps_patients_together_and_is_seeded() {
    let ds = common::cohort(60, 2);
    let mut a = ds.clone();
    let mut b = ds.clone();
    a.split_by_patient(0.25, 9).unwrap();
    b.split_by_patient(0.25, 9).unwrap();
    assert_eq!(a.split, b.split);
    for (i, x) in a.instances.iter().enumerate() {
        for (j, y) in a.instances.iter().enumerate() {
            if x.patient_id == y.patient_id {
                assert_eq!(a.split[i], a.split[j]);
            }
        }
    }
    assert!(a.test().count() > 0 && a.train().count() > 0);
}

fn binary_schema() -> DataSchema {
    DataSchema::new(vec![
        FeatureSpec::binary("Flag", "no", "yes", true),
        FeatureSpec::continuous("x", "u", 0.0, 1.0, true),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generation_is_pure(seed in any::<u64>(), n in 1usize..30) {
        let schema = default_weaning_schema();
        let a = generate_cohort(&config(n, seed), &schema).unwrap();
        let b = generate_cohort(&config(n, seed), &schema).unwrap();
        prop_assert_eq!(a.to_csv_bytes().unwrap(), b.to_csv_bytes().unwrap());
    }

    #[test]
    fn conformant_csv_round_trips(seed in any::<u64>(), n in 1usize..30) {
        let schema = default_weaning_schema();
        let ds = generate_cohort(&config(n, seed), &schema).unwrap();
        let bytes = ds.to_csv_bytes().unwrap();
        let back = Dataset::read_csv(&schema, bytes.as_slice()).unwrap();
        prop_assert_eq!(back.to_csv_bytes().unwrap(), bytes);
    }

    #[test]
    fn report_partitions_findings(
        seed in any::<u64>(),
        blanks in proptest::collection::vec((0usize..200, 0usize..25), 0..40),
        wild in proptest::collection::vec((0usize..200, 0usize..25, -1e3f64..1e3), 0..10),
    ) {
        let mut ds = common::cohort(40, seed);
        let n = ds.len();
        for (r, c) in blanks {
            ds.instances[r % n].values[c] = None;
        }
        for (r, c, v) in wild {
            ds.instances[r % n].values[c] = Some(v);
        }
        let report = quality_report(&ds, &QualityConfig::default()).unwrap();
        let order: Vec<Criterion> = report.sections.iter().map(|s| s.criterion).collect();
        prop_assert_eq!(order, Criterion::ALL.to_vec());
        let sum: usize = report.sections.iter().map(|s| s.findings.len()).sum();
        prop_assert_eq!(sum, report.total_findings);
        prop_assert_eq!(report.findings().count(), report.total_findings);
        for s in &report.sections {
            prop_assert!(s.findings.iter().all(|f| f.criterion == s.criterion));
        }
        let any_fail = report.findings().any(|f| f.severity == Severity::Fail);
        prop_assert_eq!(report.passed, !any_fail);
    }

    #[test]
    fn balance_rule(yes in 0usize..60, no in 0usize..60, tolerance in 0.0f64..0.5) {
        prop_assume!(yes + no > 0);
        let rows = (0..yes + no)
            .map(|i| Instance::complete(&format!("r{i}"), &format!("p{i}"), vec![f64::from(u8::from(i < yes)), 0.5], (i % 2) as u8))
            .collect();
        let ds = Dataset::new(binary_schema(), rows).unwrap();
        let f = check_balance(&ds, &["Flag".to_string()], tolerance).unwrap();
        let max_share = yes.max(no) as f64 / (yes + no) as f64;
        let failed = f.findings.iter().any(|f| f.column.as_deref() == Some("Flag") && f.severity == Severity::Fail);
        prop_assert_eq!(failed, max_share > 0.5 + tolerance);
    }
}

#[test]
fn balance_examples() {
    let rows = |yes: usize, labels_one: usize| -> Dataset {
        let inst = (0..100)
            .map(|i| Instance::complete(&format!("r{i}"), &format!("p{i}"), vec![f64::from(u8::from(i < yes)), 0.5], u8::from(i < labels_one)))
            .collect();
        Dataset::new(binary_schema(), inst).unwrap()
    };
    let keys = ["Flag".to_string()];
    assert!(!check_balance(&rows(50, 50), &keys, 0.1).unwrap().has_fail());
    let skewed = check_balance(&rows(50, 90), &keys, 0.2).unwrap();
    let label = binary_schema().label_name;
    assert!(skewed.findings.iter().any(|f| f.column.as_deref() == Some(label.as_str()) && f.severity == Severity::Fail));
    assert!(!check_balance(&rows(100, 0), &keys, 0.5).unwrap().has_fail());
    assert!(check_balance(&rows(50, 50), &["x".to_string()], 0.1).is_err());
}
