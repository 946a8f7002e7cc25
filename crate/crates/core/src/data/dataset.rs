use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::{DataSchema, FeatureKind};
use crate::error::{Error, Result};

/// One observation window. Categorical values hold their category index;
/// `None` is a missing cell, `NaN` a cell that could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub patient_id: String,
    pub values: Vec<Option<f64>>,
    pub label: u8,
    pub extubation_failure: bool,
}

impl Instance {
    pub fn complete(id: &str, patient_id: &str, values: Vec<f64>, label: u8) -> Self {
        Instance {
            id: id.to_string(),
            patient_id: patient_id.to_string(),
            values: values.into_iter().map(Some).collect(),
            label,
            extubation_failure: false,
        }
    }

    /// All values, or an error naming the first missing column.
    pub fn dense_values(&self, schema: &DataSchema) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::Data(format!(
                        "record `{}` has a missing or invalid `{}` cell",
                        self.id, schema.features[i].name
                    ))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: DataSchema,
    pub instances: Vec<Instance>,
    pub split: Vec<Split>,
}

impl Dataset {
    /// Every instance starts in the training split.
    pub fn new(schema: DataSchema, instances: Vec<Instance>) -> Result<Self> {
        let split = vec![Split::Train; instances.len()];
        Self::with_split(schema, instances, split)
    }

    pub fn with_split(schema: DataSchema, instances: Vec<Instance>, split: Vec<Split>) -> Result<Self> {
        if split.len() != instances.len() {
            return Err(Error::Data("split tags do not match instance count".into()));
        }
        let mut ids = BTreeSet::new();
        for inst in &instances {
            if inst.values.len() != schema.len() {
                return Err(Error::Data(format!(
                    "record `{}` has {} values, schema has {} features",
                    inst.id,
                    inst.values.len(),
                    schema.len()
                )));
            }
            if inst.label > 1 {
                return Err(Error::Data(format!("record `{}` has label {}", inst.id, inst.label)));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Data(format!("duplicate record id `{}`", inst.id)));
            }
        }
        Ok(Dataset {
            schema,
            instances,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn train(&self) -> impl Iterator<Item = &Instance> {
        self.instances_in(Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Instance> {
        self.instances_in(Split::Test)
    }

    pub fn instances_in(&self, which: Split) -> impl Iterator<Item = &Instance> {
        self.instances
            .iter()
            .zip(&self.split)
            .filter(move |(_, s)| **s == which)
            .map(|(i, _)| i)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.id == id)
    }

    pub fn get(&self, id: &str) -> Result<&Instance> {
        self.position(id)
            .map(|p| &self.instances[p])
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    /// Keeps the instances for which `keep` returns true, preserving order
    /// and split tags.
    pub fn filter(&self, mut keep: impl FnMut(&Instance, Split) -> bool) -> Dataset {
        let mut instances = Vec::new();
        let mut split = Vec::new();
        for (inst, s) in self.instances.iter().zip(&self.split) {
            if keep(inst, *s) {
                instances.push(inst.clone());
                split.push(*s);
            }
        }
        Dataset {
            schema: self.schema.clone(),
            instances,
            split,
        }
    }

    /// Restricts every instance to the named features, in the given order.
    pub fn project(&self, names: &[&str]) -> Result<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.schema
                    .index_of(n)
                    .ok_or_else(|| Error::Config(format!("unknown feature `{n}`")))
            })
            .collect::<Result<_>>()?;
        let mut schema = self.schema.clone();
        schema.features = idx.iter().map(|&j| self.schema.features[j].clone()).collect();
        schema.validate()?;
        let instances = self
            .instances
            .iter()
            .map(|inst| Instance {
                values: idx.iter().map(|&j| inst.values[j]).collect(),
                ..inst.clone()
            })
            .collect();
        Ok(Dataset {
            schema,
            instances,
            split: self.split.clone(),
        })
    }

    pub fn without(&self, id: &str) -> Dataset {
        self.filter(|i, _| i.id != id)
    }

    /// Assigns whole patients to the test split: patient ids are shuffled
    /// with `seed` and the first `ceil(test_fraction * patients)` go to test.
    pub fn split_by_patient(&mut self, test_fraction: f64, seed: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&test_fraction) {
            return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1]")));
        }
        let mut patients: Vec<&str> = self.instances.iter().map(|i| i.patient_id.as_str()).collect();
        patients.sort_unstable();
        patients.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        patients.shuffle(&mut rng);
        let n_test = (test_fraction * patients.len() as f64).ceil() as usize;
        let test: BTreeSet<String> = patients[..n_test.min(patients.len())]
            .iter()
            .map(|p| p.to_string())
            .collect();
        self.split = self
            .instances
            .iter()
            .map(|i| {
                if test.contains(&i.patient_id) {
                    Split::Test
                } else {
                    Split::Train
                }
            })
            .collect();
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let s = &self.schema;
        let mut header = vec![s.id_columns.record.clone(), s.id_columns.patient.clone()];
        header.extend(s.features.iter().map(|f| f.name.clone()));
        header.push(s.cohort_flags.extubation_failure.clone());
        header.push(s.label_name.clone());
        header
    }

    /// Writes the dataset as CSV: id columns, features in schema order,
    /// cohort flag, label. Categoricals are written as their string value,
    /// missing cells as empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        for inst in &self.instances {
            let mut row = vec![inst.id.clone(), inst.patient_id.clone()];
            for (spec, value) in self.schema.features.iter().zip(&inst.values) {
                let cell = match value {
                    None => String::new(),
                    Some(v) => match spec.levels() {
                        Some(levels) if spec.admits(*v) => levels[*v as usize].clone(),
                        Some(_) => String::new(),
                        None if v.is_finite() => format!("{v}"),
                        None => String::new(),
                    },
                };
                row.push(cell);
            }
            row.push(if inst.extubation_failure { "1" } else { "0" }.to_string());
            row.push(inst.label.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(out)
    }

    /// Reads a CSV written in the layout of [`Dataset::write_csv`].
    ///
    /// Unparseable numbers and unknown category strings are kept as `NaN`
    /// so that the conformance check can report them; structural problems
    /// (header, ids, labels) are errors. All rows start in the train split.
    pub fn read_csv<R: Read>(schema: &DataSchema, reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let expected = Dataset {
            schema: schema.clone(),
            instances: vec![],
            split: vec![],
        }
        .header();
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != expected {
            return Err(Error::Data(format!(
                "CSV header does not match the schema: expected {expected:?}, found {header:?}"
            )));
        }
        let n = schema.len();
        let mut instances = Vec::new();
        for (row_no, record) in r.records().enumerate() {
            let record = record?;
            let line = row_no + 2;
            let values = (0..n)
                .map(|j| {
                    let cell = &record[2 + j];
                    if cell.is_empty() {
                        return None;
                    }
                    let spec = &schema.features[j];
                    Some(match spec.kind {
                        FeatureKind::Continuous => cell.parse::<f64>().unwrap_or(f64::NAN),
                        FeatureKind::Categorical | FeatureKind::Binary => {
                            spec.level_index(cell).map(|k| k as f64).unwrap_or(f64::NAN)
                        }
                    })
                })
                .collect();
            let flag = match &record[2 + n] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Data(format!("line {line}: cohort flag `{other}` is not 0/1")))
                }
            };
            let label = match &record[3 + n] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::Data(format!("line {line}: label `{other}` is not 0/1"))),
            };
            instances.push(Instance {
                id: record[0].to_string(),
                patient_id: record[1].to_string(),
                values,
                label,
                extubation_failure: flag,
            });
        }
        Dataset::new(schema.clone(), instances)
    }
}
