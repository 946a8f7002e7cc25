use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const LABEL_SEMANTICS: &str = "1 = remain intubated in next hour, 0 = ready to extubate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
    Binary,
}

/// Admissible values of a feature: an interval for continuous features, a
/// vocabulary for categorical and binary ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlausibleRange {
    Interval { min: f64, max: f64 },
    Values(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub unit: String,
    /// Actionable (true) vs fixed attribute (false).
    pub mutable: bool,
    pub plausible_range: PlausibleRange,
    /// Sign of the expected association with the label; used only to
    /// document the synthetic ground truth.
    #[serde(default)]
    pub monotone_hint: Option<i8>,
}

impl FeatureSpec {
    pub fn continuous(name: &str, unit: &str, min: f64, max: f64, mutable: bool) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            unit: unit.to_string(),
            mutable,
            plausible_range: PlausibleRange::Interval { min, max },
            monotone_hint: None,
        }
    }

    pub fn categorical(name: &str, values: &[&str], mutable: bool) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            unit: String::new(),
            mutable,
            plausible_range: PlausibleRange::Values(values.iter().map(|v| v.to_string()).collect()),
            monotone_hint: None,
        }
    }

    pub fn binary(name: &str, no: &str, yes: &str, mutable: bool) -> Self {
        FeatureSpec {
            kind: FeatureKind::Binary,
            ..Self::categorical(name, &[no, yes], mutable)
        }
    }

    pub fn with_hint(mut self, sign: i8) -> Self {
        self.monotone_hint = Some(sign);
        self
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == FeatureKind::Continuous
    }

    /// Vocabulary of a categorical or binary feature.
    pub fn levels(&self) -> Option<&[String]> {
        match &self.plausible_range {
            PlausibleRange::Values(v) => Some(v),
            PlausibleRange::Interval { .. } => None,
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.plausible_range {
            PlausibleRange::Interval { min, max } => Some((min, max)),
            PlausibleRange::Values(_) => None,
        }
    }

    pub fn level_index(&self, value: &str) -> Option<usize> {
        self.levels()?.iter().position(|v| v == value)
    }

    /// Whether `value` (category index for discrete kinds) is admissible.
    pub fn admits(&self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match &self.plausible_range {
            PlausibleRange::Interval { min, max } => value >= *min && value <= *max,
            PlausibleRange::Values(v) => {
                value >= 0.0 && value.fract() == 0.0 && (value as usize) < v.len()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Schema("feature with empty name".into()));
        }
        match (&self.kind, &self.plausible_range) {
            (FeatureKind::Continuous, PlausibleRange::Interval { min, max }) => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(Error::Schema(format!(
                        "feature `{}`: plausible range needs min < max",
                        self.name
                    )));
                }
            }
            (FeatureKind::Categorical, PlausibleRange::Values(v))
            | (FeatureKind::Binary, PlausibleRange::Values(v)) => {
                let mut distinct = v.clone();
                distinct.sort();
                distinct.dedup();
                if distinct.len() != v.len() || v.len() < 2 {
                    return Err(Error::Schema(format!(
                        "feature `{}`: vocabulary needs at least 2 distinct entries",
                        self.name
                    )));
                }
                if self.kind == FeatureKind::Binary && v.len() != 2 {
                    return Err(Error::Schema(format!(
                        "binary feature `{}` must have exactly 2 values",
                        self.name
                    )));
                }
            }
            _ => {
                return Err(Error::Schema(format!(
                    "feature `{}`: plausible range does not match its kind",
                    self.name
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdColumns {
    pub record: String,
    pub patient: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFlags {
    pub extubation_failure: String,
}

/// Ordered feature list; the order is the column order of every dataset,
/// model input and report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    pub features: Vec<FeatureSpec>,
    pub label_name: String,
    pub label_semantics: String,
    pub id_columns: IdColumns,
    pub cohort_flags: CohortFlags,
}

impl DataSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = DataSchema {
            features,
            label_name: "remain_intubated".into(),
            label_semantics: LABEL_SEMANTICS.into(),
            id_columns: IdColumns {
                record: "record_id".into(),
                patient: "patient_id".into(),
            },
            cohort_flags: CohortFlags {
                extubation_failure: "extubation_failure".into(),
            },
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let mut names: Vec<&str> = Vec::with_capacity(self.features.len() + 4);
        for f in &self.features {
            f.validate()?;
            names.push(&f.name);
        }
        names.extend([
            self.label_name.as_str(),
            self.id_columns.record.as_str(),
            self.id_columns.patient.as_str(),
            self.cohort_flags.extubation_failure.as_str(),
        ]);
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate column name `{}`", w[0])));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Result<&FeatureSpec> {
        self.index_of(name)
            .map(|i| &self.features[i])
            .ok_or_else(|| Error::Config(format!("unknown column `{name}`")))
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn content_hash(&self) -> String {
        util::canonical_hash(self)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let schema: DataSchema = serde_json::from_slice(bytes)?;
        schema.validate()?;
        Ok(schema)
    }
}

/// The 25 weaning features in canonical order. Ranges and units are
/// configuration drawn from common ICU reference values.
pub fn default_weaning_schema() -> DataSchema {
    use FeatureSpec as F;
    let features = vec![
        F::categorical("Admit Type", &["Emergency", "Elective", "Urgent"], false),
        F::categorical(
            "Ethnicity",
            &["White", "Black", "Hispanic", "Asian", "Other"],
            false,
        ),
        F::categorical("Gender", &["Female", "Male"], false),
        F::continuous("Age", "years", 18.0, 100.0, false),
        F::continuous("Admission Weight", "kg", 30.0, 250.0, false),
        F::continuous("Heart Rate", "bpm", 20.0, 220.0, true).with_hint(1),
        F::continuous("Respiratory Rate", "insp/min", 0.0, 70.0, true),
        F::continuous("SpO2", "%", 50.0, 100.0, true).with_hint(-1),
        F::continuous("Inspired O2 Fraction", "%", 21.0, 100.0, true).with_hint(1),
        F::continuous("PEEP set", "cmH2O", 0.0, 25.0, true).with_hint(1),
        F::continuous("Mean Airway Pressure", "cmH2O", 0.0, 50.0, true),
        F::continuous("Tidal Volume (observed)", "mL", 0.0, 2000.0, true),
        F::continuous("PH (Arterial)", "pH units", 6.8, 7.8, true),
        F::continuous("Respiratory Rate (Spont)", "insp/min", 0.0, 70.0, true).with_hint(-1),
        F::continuous("Richmond-RAS Scale", "score", -5.0, 4.0, true),
        F::continuous("Peak Insp. Pressure", "cmH2O", 0.0, 70.0, true),
        F::continuous("O2 Flow", "L/min", 0.0, 70.0, true),
        F::continuous("Plateau Pressure", "cmH2O", 0.0, 60.0, true),
        F::continuous("Arterial O2 pressure", "mmHg", 20.0, 600.0, true),
        F::continuous("Arterial CO2 Pressure", "mmHg", 10.0, 150.0, true),
        F::continuous("Blood Pressure (systolic)", "mmHg", 40.0, 260.0, true),
        F::continuous("Blood Pressure (diastolic)", "mmHg", 20.0, 160.0, true),
        F::continuous("Blood Pressure (mean)", "mmHg", 25.0, 200.0, true),
        F::categorical(
            "Spontaneous breathing trials",
            &["No result", "Successfully Completed", "Failed"],
            true,
        ),
        F::categorical(
            "Ventilator Mode",
            &["CMV/ASSIST/AutoFlow", "PCV+", "SIMV/PSV", "CPAP/PPS", "PRVC/AC"],
            true,
        ),
    ];
    DataSchema::new(features).expect("built-in schema is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weaning_schema_has_25_features() {
        let s = default_weaning_schema();
        assert_eq!(s.len(), 25);
        assert_eq!(s.features[0].name, "Admit Type");
        assert_eq!(s.features[24].name, "Ventilator Mode");
    }

    #[test]
    fn immutables_and_categoricals() {
        let s = default_weaning_schema();
        let immutable: Vec<&str> = s
            .features
            .iter()
            .filter(|f| !f.mutable)
            .map(|f| f.name.as_str())
            .collect();
        assert_eq!(
            immutable,
            ["Admit Type", "Ethnicity", "Gender", "Age", "Admission Weight"]
        );
        let categorical: Vec<&str> = s
            .features
            .iter()
            .filter(|f| f.kind == FeatureKind::Categorical)
            .map(|f| f.name.as_str())
            .collect();
        assert_eq!(
            categorical,
            [
                "Admit Type",
                "Ethnicity",
                "Gender",
                "Spontaneous breathing trials",
                "Ventilator Mode"
            ]
        );
        assert!(!s.feature("Gender").unwrap().mutable);
    }

    #[test]
    fn peep_range() {
        let s = default_weaning_schema();
        let peep = s.feature("PEEP set").unwrap();
        assert!(peep.is_continuous());
        assert_eq!(peep.bounds(), Some((0.0, 25.0)));
        assert_eq!(peep.unit, "cmH2O");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(FeatureSpec::continuous("x", "", 1.0, 1.0, true).validate().is_err());
        assert!(FeatureSpec::categorical("c", &["a"], true).validate().is_err());
        assert!(FeatureSpec::categorical("c", &["a", "a"], true).validate().is_err());
        let dup = DataSchema::new(vec![
            FeatureSpec::continuous("x", "", 0.0, 1.0, true),
            FeatureSpec::continuous("x", "", 0.0, 1.0, true),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn json_round_trip_and_hash() {
        let s = default_weaning_schema();
        let bytes = s.to_json().unwrap();
        let back = DataSchema::from_json(&bytes).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.content_hash(), back.content_hash());
        assert_eq!(s.content_hash().len(), 64);
    }
}
