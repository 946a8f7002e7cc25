//! The five data-quality criteria: conformance, completeness, accuracy,
//! relevance and balance.
//!
//! Violations are findings, never errors. Errors are reserved for checks
//! that are configured against columns the schema does not have.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::schema::FeatureKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Conformance,
    Completeness,
    Accuracy,
    Relevance,
    Balance,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Conformance,
        Criterion::Completeness,
        Criterion::Accuracy,
        Criterion::Relevance,
        Criterion::Balance,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub criterion: Criterion,
    pub severity: Severity,
    pub column: Option<String>,
    pub description: String,
    pub measured: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub column: String,
    pub value: f64,
}

/// Outcome of one criterion: its findings plus the per-column quantities
/// it measured (missingness rates, group shares, violation rates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityFindings {
    pub criterion: Criterion,
    pub findings: Vec<Finding>,
    pub measurements: Vec<Measurement>,
}

impl QualityFindings {
    fn new(criterion: Criterion) -> Self {
        QualityFindings {
            criterion,
            findings: Vec::new(),
            measurements: Vec::new(),
        }
    }

    fn push(&mut self, severity: Severity, column: Option<&str>, description: String, measured: Option<f64>) {
        self.findings.push(Finding {
            criterion: self.criterion,
            severity,
            column: column.map(str::to_string),
            description,
            measured,
        });
    }

    pub fn has_fail(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Fail)
    }

    pub fn measurement(&self, column: &str) -> Option<f64> {
        self.measurements
            .iter()
            .find(|m| m.column == column)
            .map(|m| m.value)
    }
}

pub fn check_conformance(ds: &Dataset) -> QualityFindings {
    let mut out = QualityFindings::new(Criterion::Conformance);
    let n = ds.len();
    for (j, spec) in ds.schema.features.iter().enumerate() {
        let mut type_mismatch = 0usize;
        let mut out_of_vocab = 0usize;
        let mut out_of_range = 0usize;
        let mut worst: Option<f64> = None;
        for inst in &ds.instances {
            let Some(v) = inst.values[j] else { continue };
            match spec.kind {
                FeatureKind::Continuous => {
                    if !v.is_finite() {
                        type_mismatch += 1;
                    } else if !spec.admits(v) {
                        out_of_range += 1;
                        worst.get_or_insert(v);
                    }
                }
                FeatureKind::Categorical | FeatureKind::Binary => {
                    if v.is_finite() && v.fract() != 0.0 {
                        type_mismatch += 1;
                    } else if !spec.admits(v) {
                        out_of_vocab += 1;
                    }
                }
            }
        }
        let rate = |count: usize| count as f64 / n.max(1) as f64;
        if type_mismatch > 0 {
            out.push(
                Severity::Fail,
                Some(&spec.name),
                format!("{type_mismatch} value(s) do not match the {:?} type", spec.kind),
                Some(rate(type_mismatch)),
            );
        }
        if out_of_vocab > 0 {
            out.push(
                Severity::Fail,
                Some(&spec.name),
                format!("{out_of_vocab} value(s) outside the category vocabulary"),
                Some(rate(out_of_vocab)),
            );
        }
        if out_of_range > 0 {
            let (min, max) = spec.bounds().unwrap_or((f64::NAN, f64::NAN));
            out.push(
                Severity::Fail,
                Some(&spec.name),
                format!(
                    "{out_of_range} value(s) outside the plausible range [{min}, {max}] {} (first: {})",
                    spec.unit,
                    worst.unwrap_or(f64::NAN)
                ),
                Some(rate(out_of_range)),
            );
        }
    }
    out
}

pub fn check_completeness(ds: &Dataset, max_missing: f64) -> Result<QualityFindings> {
    if !(0.0..=1.0).contains(&max_missing) {
        return Err(Error::Config(format!("max_missing = {max_missing} outside [0, 1]")));
    }
    let mut out = QualityFindings::new(Criterion::Completeness);
    let n = ds.len().max(1) as f64;
    for (j, spec) in ds.schema.features.iter().enumerate() {
        let missing = ds.instances.iter().filter(|i| i.values[j].is_none()).count();
        let rate = missing as f64 / n;
        out.measurements.push(Measurement {
            column: spec.name.clone(),
            value: rate,
        });
        if rate > max_missing {
            out.push(
                Severity::Fail,
                Some(&spec.name),
                format!("missingness {rate:.4} exceeds the limit {max_missing}"),
                Some(rate),
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Ge,
    Gt,
    Le,
    Lt,
}

impl Comparison {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Comparison::Ge => a >= b,
            Comparison::Gt => a > b,
            Comparison::Le => a <= b,
            Comparison::Lt => a < b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Ge => ">=",
            Comparison::Gt => ">",
            Comparison::Le => "<=",
            Comparison::Lt => "<",
        }
    }
}

/// `left <op> right`, evaluated on every row where both cells are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFieldRule {
    pub left: String,
    pub op: Comparison,
    pub right: String,
}

impl CrossFieldRule {
    pub fn new(left: &str, op: Comparison, right: &str) -> Self {
        CrossFieldRule {
            left: left.into(),
            op,
            right: right.into(),
        }
    }

    pub fn describe(&self) -> String {
        format!("{} {} {}", self.left, self.op.symbol(), self.right)
    }
}

pub fn default_accuracy_rules() -> Vec<CrossFieldRule> {
    use Comparison::*;
    vec![
        CrossFieldRule::new("Blood Pressure (systolic)", Ge, "Blood Pressure (diastolic)"),
        CrossFieldRule::new("Blood Pressure (mean)", Le, "Blood Pressure (systolic)"),
        CrossFieldRule::new("Blood Pressure (mean)", Ge, "Blood Pressure (diastolic)"),
        CrossFieldRule::new("Mean Airway Pressure", Ge, "PEEP set"),
        CrossFieldRule::new("Peak Insp. Pressure", Ge, "Plateau Pressure"),
    ]
}

pub fn check_accuracy(ds: &Dataset, rules: &[CrossFieldRule]) -> Result<QualityFindings> {
    let mut out = QualityFindings::new(Criterion::Accuracy);
    for rule in rules {
        let l = ds
            .schema
            .index_of(&rule.left)
            .ok_or_else(|| Error::Config(format!("accuracy rule references unknown column `{}`", rule.left)))?;
        let r = ds
            .schema
            .index_of(&rule.right)
            .ok_or_else(|| Error::Config(format!("accuracy rule references unknown column `{}`", rule.right)))?;
        let mut checked = 0usize;
        let mut violations = 0usize;
        for inst in &ds.instances {
            if let (Some(a), Some(b)) = (inst.values[l], inst.values[r]) {
                if a.is_finite() && b.is_finite() {
                    checked += 1;
                    if !rule.op.holds(a, b) {
                        violations += 1;
                    }
                }
            }
        }
        let rate = violations as f64 / checked.max(1) as f64;
        out.measurements.push(Measurement {
            column: rule.describe(),
            value: rate,
        });
        if violations > 0 {
            out.push(
                Severity::Fail,
                Some(&rule.left),
                format!("{violations} of {checked} row(s) violate `{}`", rule.describe()),
                Some(rate),
            );
        }
    }
    Ok(out)
}

pub fn check_relevance(ds: &Dataset, allowlist: &[String]) -> QualityFindings {
    let mut out = QualityFindings::new(Criterion::Relevance);
    for spec in &ds.schema.features {
        if !allowlist.iter().any(|a| a == &spec.name) {
            out.push(
                Severity::Warn,
                Some(&spec.name),
                "feature is not on the clinical relevance allowlist".into(),
                None,
            );
        }
    }
    for name in allowlist {
        if ds.schema.index_of(name).is_none() {
            out.push(
                Severity::Warn,
                Some(name),
                "clinically relevant factor is absent from the data".into(),
                None,
            );
        }
    }
    out
}

/// Group shares per key. A key with `k` groups fails when its largest
/// share exceeds `1/k + tolerance`. The label's class balance is always
/// included.
pub fn check_balance(ds: &Dataset, keys: &[String], tolerance: f64) -> Result<QualityFindings> {
    if !(0.0..=1.0).contains(&tolerance) {
        return Err(Error::Config(format!("balance tolerance {tolerance} outside [0, 1]")));
    }
    let mut out = QualityFindings::new(Criterion::Balance);
    let label = ds.schema.label_name.clone();
    let mut all_keys: Vec<&String> = keys.iter().collect();
    if !all_keys.contains(&&label) {
        all_keys.push(&label);
    }
    for key in all_keys {
        let (levels, counts): (Vec<String>, Vec<usize>) = if *key == label {
            let ones = ds.instances.iter().filter(|i| i.label == 1).count();
            (vec!["0".into(), "1".into()], vec![ds.len() - ones, ones])
        } else {
            let j = ds
                .schema
                .index_of(key)
                .ok_or_else(|| Error::Config(format!("balance key `{key}` is not a schema column")))?;
            let spec = &ds.schema.features[j];
            let levels = spec
                .levels()
                .ok_or_else(|| Error::Config(format!("balance key `{key}` is continuous")))?
                .to_vec();
            let mut counts = vec![0usize; levels.len()];
            for inst in &ds.instances {
                if let Some(v) = inst.values[j] {
                    if spec.admits(v) {
                        counts[v as usize] += 1;
                    }
                }
            }
            (levels, counts)
        };
        let total: usize = counts.iter().sum();
        if total == 0 {
            out.push(Severity::Warn, Some(key), "no observed values".into(), None);
            continue;
        }
        let k = levels.len() as f64;
        let mut max_share: f64 = 0.0;
        for (level, count) in levels.iter().zip(&counts) {
            let share = *count as f64 / total as f64;
            max_share = max_share.max(share);
            out.measurements.push(Measurement {
                column: format!("{key}={level}"),
                value: share,
            });
        }
        if max_share > 1.0 / k + tolerance {
            let what = if *key == label { "class balance" } else { "group balance" };
            out.push(
                Severity::Fail,
                Some(key),
                format!(
                    "{what}: largest share {max_share:.4} exceeds uniform {:.4} + tolerance {tolerance}",
                    1.0 / k
                ),
                Some(max_share),
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub max_missing: f64,
    pub balance_tolerance: f64,
    pub balance_keys: Vec<String>,
    /// `None` treats every schema feature as clinically relevant.
    pub allowlist: Option<Vec<String>>,
    pub accuracy_rules: Vec<CrossFieldRule>,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            max_missing: 0.05,
            balance_tolerance: 0.15,
            balance_keys: vec!["Gender".into()],
            allowlist: None,
            accuracy_rules: default_accuracy_rules(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub schema_hash: String,
    pub records: usize,
    pub config: QualityConfig,
    /// One section per criterion, in [`Criterion::ALL`] order.
    pub sections: Vec<QualityFindings>,
    pub total_findings: usize,
    pub passed: bool,
}

impl QualityReport {
    pub fn section(&self, criterion: Criterion) -> &QualityFindings {
        self.sections
            .iter()
            .find(|s| s.criterion == criterion)
            .expect("all criteria present")
    }

    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.sections.iter().flat_map(|s| &s.findings)
    }
}

pub fn quality_report(ds: &Dataset, config: &QualityConfig) -> Result<QualityReport> {
    let allowlist = config
        .allowlist
        .clone()
        .unwrap_or_else(|| ds.schema.features.iter().map(|f| f.name.clone()).collect());
    let sections = vec![
        check_conformance(ds),
        check_completeness(ds, config.max_missing)?,
        check_accuracy(ds, &config.accuracy_rules)?,
        check_relevance(ds, &allowlist),
        check_balance(ds, &config.balance_keys, config.balance_tolerance)?,
    ];
    let total_findings = sections.iter().map(|s| s.findings.len()).sum();
    let passed = !sections.iter().any(QualityFindings::has_fail);
    Ok(QualityReport {
        schema_hash: ds.schema.content_hash(),
        records: ds.len(),
        config: config.clone(),
        sections,
        total_findings,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cohort::{generate_cohort, CohortConfig};
    use crate::data::dataset::Instance;
    use crate::data::schema::{default_weaning_schema, DataSchema, FeatureSpec};

    fn clean() -> Dataset {
        generate_cohort(&CohortConfig::default(), &default_weaning_schema()).unwrap()
    }

    fn set(ds: &mut Dataset, row: usize, column: &str, value: Option<f64>) {
        let j = ds.schema.index_of(column).unwrap();
        ds.instances[row].values[j] = value;
    }

    #[test]
    fn clean_data_conforms() {
        assert!(check_conformance(&clean()).findings.is_empty());
    }

    #[test]
    fn negative_heart_rate_is_one_fail() {
        let mut ds = clean();
        set(&mut ds, 3, "Heart Rate", Some(-5.0));
        let f = check_conformance(&ds);
        assert_eq!(f.findings.len(), 1);
        assert_eq!(f.findings[0].severity, Severity::Fail);
        assert_eq!(f.findings[0].column.as_deref(), Some("Heart Rate"));
    }

    #[test]
    fn categorical_outside_vocabulary_fails() {
        let mut ds = clean();
        set(&mut ds, 0, "Ventilator Mode", Some(17.0));
        let f = check_conformance(&ds);
        assert_eq!(f.findings.len(), 1);
        assert_eq!(f.findings[0].column.as_deref(), Some("Ventilator Mode"));
        assert!(f.has_fail());
    }

    #[test]
    fn completeness_rates() {
        let ds = clean();
        let f = check_completeness(&ds, 0.05).unwrap();
        assert!(f.findings.is_empty());
        assert!(f.measurements.iter().all(|m| m.value == 0.0));

        let mut ds = ds;
        // Blank exactly 5% of one column.
        let n = 200;
        ds.instances.truncate(n);
        ds.split.truncate(n);
        for row in 0..10 {
            set(&mut ds, row * 20, "SpO2", None);
        }
        let f = check_completeness(&ds, 0.02).unwrap();
        assert_eq!(f.findings.len(), 1);
        assert_eq!(f.findings[0].measured, Some(0.05));
        assert!(check_completeness(&ds, 1.0).unwrap().findings.is_empty());
    }

    #[test]
    fn accuracy_rules() {
        let schema = default_weaning_schema();
        let sys = schema.index_of("Blood Pressure (systolic)").unwrap();
        let dia = schema.index_of("Blood Pressure (diastolic)").unwrap();
        let mut ds = clean();
        ds.instances.truncate(2);
        ds.split.truncate(2);
        ds.instances[0].values[sys] = Some(101.0);
        ds.instances[0].values[dia] = Some(65.0);
        ds.instances[1].values[sys] = Some(101.0);
        ds.instances[1].values[dia] = Some(65.0);
        let rule = [CrossFieldRule::new(
            "Blood Pressure (systolic)",
            Comparison::Ge,
            "Blood Pressure (diastolic)",
        )];
        assert!(check_accuracy(&ds, &rule).unwrap().findings.is_empty());
        ds.instances[1].values[sys] = Some(60.0);
        ds.instances[1].values[dia] = Some(90.0);
        let f = check_accuracy(&ds, &rule).unwrap();
        assert_eq!(f.findings.len(), 1);
        assert_eq!(f.findings[0].severity, Severity::Fail);
        assert!(check_accuracy(&ds, &[]).unwrap().findings.is_empty());
        let bad = [CrossFieldRule::new("Nope", Comparison::Ge, "SpO2")];
        assert!(matches!(check_accuracy(&ds, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn relevance() {
        let ds = clean();
        let names: Vec<String> = ds.schema.features.iter().map(|f| f.name.clone()).collect();
        assert!(check_relevance(&ds, &names).findings.is_empty());

        let mut with_extra = names.clone();
        with_extra.push("SBT".into());
        let f = check_relevance(&ds, &with_extra);
        assert_eq!(f.findings.len(), 1);
        assert_eq!(f.findings[0].severity, Severity::Warn);

        let mut features = ds.schema.features.clone();
        features.push(FeatureSpec::continuous("billing_code", "", 0.0, 1e6, true));
        let schema = DataSchema::new(features).unwrap();
        let extra = Dataset::new(schema, vec![]).unwrap();
        let f = check_relevance(&extra, &names);
        assert_eq!(f.findings.len(), 1);
        assert_eq!(f.findings[0].column.as_deref(), Some("billing_code"));
        assert_eq!(f.findings[0].severity, Severity::Warn);
    }

    fn balance_fixture(gender_female: usize, label_ones: usize, n: usize) -> Dataset {
        let schema = DataSchema::new(vec![
            FeatureSpec::categorical("Gender", &["Female", "Male"], false),
            FeatureSpec::continuous("x", "", 0.0, 1.0, true),
        ])
        .unwrap();
        let instances = (0..n)
            .map(|i| {
                let g = if i < gender_female { 0.0 } else { 1.0 };
                let y = u8::from(i < label_ones);
                Instance::complete(&format!("r{i}"), &format!("p{i}"), vec![g, 0.5], y)
            })
            .collect();
        Dataset::new(schema, instances).unwrap()
    }

    #[test]
    fn balance() {
        let ds = balance_fixture(50, 50, 100);
        let f = check_balance(&ds, &["Gender".into()], 0.1).unwrap();
        assert!(f.findings.is_empty());
        assert_eq!(f.measurement("Gender=Female"), Some(0.5));
        assert_eq!(f.measurement("remain_intubated=1"), Some(0.5));

        let skewed = balance_fixture(50, 90, 100);
        let f = check_balance(&skewed, &["Gender".into()], 0.2).unwrap();
        assert_eq!(f.findings.len(), 1);
        assert_eq!(f.findings[0].column.as_deref(), Some("remain_intubated"));

        let extreme = balance_fixture(100, 100, 100);
        assert!(check_balance(&extreme, &["Gender".into()], 0.5).unwrap().findings.is_empty());

        assert!(matches!(
            check_balance(&ds, &["x".into()], 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn report_has_five_sections_and_clean_passes() {
        let report = quality_report(&clean(), &QualityConfig::default()).unwrap();
        assert_eq!(report.sections.len(), 5);
        let order: Vec<Criterion> = report.sections.iter().map(|s| s.criterion).collect();
        assert_eq!(order, Criterion::ALL);
        assert!(report.passed, "{:#?}", report.findings().collect::<Vec<_>>());
    }

    #[test]
    fn single_fail_fails_report() {
        let mut ds = clean();
        set(&mut ds, 0, "Heart Rate", Some(-5.0));
        let report = quality_report(&ds, &QualityConfig::default()).unwrap();
        assert!(!report.passed);
        let per_section: usize = report.sections.iter().map(|s| s.findings.len()).sum();
        assert_eq!(per_section, report.total_findings);
        for s in &report.sections {
            assert!(s.findings.iter().all(|f| f.criterion == s.criterion));
        }
    }
}
