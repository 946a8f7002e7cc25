//! Synthetic ventilation-weaning cohort.
//!
//! Each patient contributes several hourly records. Labels follow a fixed
//! latent rule (see [`latent_score`]) with symmetric label noise, except
//! for extubation-failure patients whose "ready" records are premature
//! (the latent rule says "remain intubated") at a configurable rate.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Instance};
use super::schema::DataSchema;
use crate::error::{Error, Result};

/// Share of an extubation-failure patient's records labeled "ready".
pub const FAILURE_READY_SHARE: f64 = 0.75;

const MAX_REJECTIONS: usize = 500;

/// Mixed into the cohort seed to seed the patient-level split.
pub const SPLIT_SEED_MIX: u64 = 0x5eed_5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n_patients: usize,
    /// Inclusive `[min, max]` number of records per patient.
    pub records_per_patient: [usize; 2],
    pub failure_fraction: f64,
    pub label_noise: f64,
    pub mislabel_bias_failure_cohort: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.25
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_patients: 100,
            records_per_patient: [3, 7],
            failure_fraction: 0.2,
            label_noise: 0.05,
            mislabel_bias_failure_cohort: 0.6,
            test_fraction: default_test_fraction(),
            seed: 1,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("failure_fraction", self.failure_fraction),
            ("label_noise", self.label_noise),
            ("mislabel_bias_failure_cohort", self.mislabel_bias_failure_cohort),
            ("test_fraction", self.test_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        let [lo, hi] = self.records_per_patient;
        if self.n_patients == 0 || lo == 0 || hi < lo {
            return Err(Error::Config(
                "n_patients and records_per_patient must be >= 1 with min <= max".into(),
            ));
        }
        Ok(())
    }
}

/// Column positions of the features the generator and latent rule use.
struct Columns {
    admit: usize,
    ethnicity: usize,
    gender: usize,
    age: usize,
    weight: usize,
    hr: usize,
    rr: usize,
    spo2: usize,
    fio2: usize,
    peep: usize,
    map: usize,
    tv: usize,
    ph: usize,
    rr_spont: usize,
    ras: usize,
    pip: usize,
    o2_flow: usize,
    plateau: usize,
    pao2: usize,
    paco2: usize,
    sys: usize,
    dia: usize,
    mean_bp: usize,
    sbt: usize,
    mode: usize,
}

impl Columns {
    fn resolve(schema: &DataSchema) -> Result<Self> {
        let idx = |name: &str| {
            schema.index_of(name).ok_or_else(|| {
                Error::Config(format!("cohort generator needs feature `{name}` in the schema"))
            })
        };
        Ok(Columns {
            admit: idx("Admit Type")?,
            ethnicity: idx("Ethnicity")?,
            gender: idx("Gender")?,
            age: idx("Age")?,
            weight: idx("Admission Weight")?,
            hr: idx("Heart Rate")?,
            rr: idx("Respiratory Rate")?,
            spo2: idx("SpO2")?,
            fio2: idx("Inspired O2 Fraction")?,
            peep: idx("PEEP set")?,
            map: idx("Mean Airway Pressure")?,
            tv: idx("Tidal Volume (observed)")?,
            ph: idx("PH (Arterial)")?,
            rr_spont: idx("Respiratory Rate (Spont)")?,
            ras: idx("Richmond-RAS Scale")?,
            pip: idx("Peak Insp. Pressure")?,
            o2_flow: idx("O2 Flow")?,
            plateau: idx("Plateau Pressure")?,
            pao2: idx("Arterial O2 pressure")?,
            paco2: idx("Arterial CO2 Pressure")?,
            sys: idx("Blood Pressure (systolic)")?,
            dia: idx("Blood Pressure (diastolic)")?,
            mean_bp: idx("Blood Pressure (mean)")?,
            sbt: idx("Spontaneous breathing trials")?,
            mode: idx("Ventilator Mode")?,
        })
    }
}

/// Latent "remain intubated" score of a complete record of the weaning
/// schema; positive means the rule says the patient should stay intubated.
///
/// Readiness grows with a successful SBT, a sedation score near 0, low PEEP,
/// low inspired O2 fraction and a present spontaneous respiratory rate. The
/// sedation term is V-shaped in the RAS score and a successful SBT counts
/// extra for an alert patient (SBT x RAS interaction), so no linear model
/// of the raw features reproduces the rule exactly.
pub fn latent_score(schema: &DataSchema, values: &[f64]) -> Result<f64> {
    let c = Columns::resolve(schema)?;
    Ok(latent_score_with(&c, values))
}

/// `1` (remain intubated) when [`latent_score`] is positive.
pub fn latent_label(schema: &DataSchema, values: &[f64]) -> Result<u8> {
    Ok(u8::from(latent_score(schema, values)? > 0.0))
}

fn latent_score_with(c: &Columns, v: &[f64]) -> f64 {
    let sbt_ok = f64::from(v[c.sbt] == 1.0);
    let sbt_failed = f64::from(v[c.sbt] == 2.0);
    let ras = v[c.ras];
    let alert = f64::from(ras.abs() <= 1.0);
    let spont = f64::from(v[c.rr_spont] > 0.0);
    let controlled = f64::from(v[c.mode] == 0.0 || v[c.mode] == 4.0);
    let cpap = f64::from(v[c.mode] == 3.0);
    0.4 + 0.9 * (v[c.peep] - 7.0) / 3.0 + 0.8 * (v[c.fio2] - 45.0) / 15.0
        + 0.5 * (v[c.hr] - 88.0) / 15.0
        - 0.3 * (v[c.spo2] - 96.5) / 2.5
        - 0.9 * spont
        - 0.8 * sbt_ok
        + 0.8 * sbt_failed
        + 0.9 * (ras.abs() - 1.2)
        - 1.6 * sbt_ok * alert
        + 0.4 * controlled
        - 0.4 * cpap
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn normal(&mut self, mean: f64, sd: f64, lo: f64, hi: f64, decimals: i32) -> f64 {
        let x = Normal::new(mean, sd).expect("valid normal").sample(&mut self.rng);
        round_to(x.clamp(lo, hi), decimals)
    }

    fn pick(&mut self, weights: &[f64]) -> f64 {
        WeightedIndex::new(weights).expect("valid weights").sample(&mut self.rng) as f64
    }

    fn coin(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }
}

struct Patient {
    admit: f64,
    ethnicity: f64,
    gender: f64,
    age: f64,
    weight: f64,
}

fn sample_patient(s: &mut Sampler) -> Patient {
    Patient {
        admit: s.pick(&[0.7, 0.2, 0.1]),
        ethnicity: s.pick(&[0.6, 0.15, 0.1, 0.08, 0.07]),
        gender: s.pick(&[0.45, 0.55]),
        age: s.normal(63.0, 15.0, 18.0, 95.0, 1),
        weight: s.normal(82.0, 18.0, 35.0, 200.0, 1),
    }
}

fn sample_record(s: &mut Sampler, c: &Columns, p: &Patient, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[c.admit] = p.admit;
    v[c.ethnicity] = p.ethnicity;
    v[c.gender] = p.gender;
    v[c.age] = p.age;
    v[c.weight] = p.weight;
    v[c.hr] = s.normal(88.0, 15.0, 35.0, 180.0, 0);
    v[c.rr] = s.normal(20.0, 5.0, 6.0, 45.0, 0);
    v[c.spo2] = s.normal(96.5, 2.5, 80.0, 100.0, 0);
    v[c.fio2] = s.normal(45.0, 15.0, 21.0, 100.0, 0);
    v[c.peep] = s.normal(7.0, 3.0, 0.0, 20.0, 0);
    v[c.map] = v[c.peep] + s.normal(5.0, 2.0, 1.0, 15.0, 0);
    v[c.tv] = s.normal(480.0, 90.0, 150.0, 1200.0, 0);
    v[c.ph] = s.normal(7.40, 0.05, 7.0, 7.7, 2);
    v[c.rr_spont] = if s.coin(0.55) {
        s.normal(16.0, 5.0, 4.0, 45.0, 0)
    } else {
        0.0
    };
    v[c.ras] = s.pick(&[0.06, 0.10, 0.14, 0.16, 0.18, 0.14, 0.10, 0.08, 0.04]) - 4.0;
    v[c.plateau] = v[c.map] + s.normal(6.0, 2.0, 1.0, 20.0, 0);
    v[c.pip] = v[c.plateau] + s.normal(3.0, 1.0, 1.0, 8.0, 0);
    v[c.o2_flow] = s.normal(6.0, 3.0, 0.0, 15.0, 0);
    v[c.pao2] = s.normal(110.0, 35.0, 45.0, 500.0, 0);
    v[c.paco2] = s.normal(40.0, 6.0, 20.0, 90.0, 0);
    v[c.sys] = s.normal(120.0, 18.0, 70.0, 220.0, 0);
    v[c.dia] = (v[c.sys] - s.normal(50.0, 10.0, 20.0, 90.0, 0)).max(35.0);
    v[c.mean_bp] = ((v[c.sys] + 2.0 * v[c.dia]) / 3.0).round();
    v[c.sbt] = s.pick(&[0.5, 0.35, 0.15]);
    v[c.mode] = s.pick(&[0.3, 0.15, 0.25, 0.2, 0.1]);
    v
}

/// Draws records until the latent rule agrees with `want` (bounded).
fn sample_conditioned(s: &mut Sampler, c: &Columns, p: &Patient, width: usize, want: u8) -> Vec<f64> {
    let mut v = sample_record(s, c, p, width);
    for _ in 0..MAX_REJECTIONS {
        if u8::from(latent_score_with(c, &v) > 0.0) == want {
            break;
        }
        v = sample_record(s, c, p, width);
    }
    v
}

/// Generates the cohort and assigns a patient-level train/test split.
/// A pure function of `(config, schema)`.
pub fn generate_cohort(config: &CohortConfig, schema: &DataSchema) -> Result<Dataset> {
    config.validate()?;
    schema.validate()?;
    let cols = Columns::resolve(schema)?;
    let width = schema.len();
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    let mut instances = Vec::new();
    let [lo, hi] = config.records_per_patient;
    for p in 0..config.n_patients {
        let patient_id = format!("P{:05}", p + 1);
        let failure = s.coin(config.failure_fraction);
        let patient = sample_patient(&mut s);
        let n_records = s.rng.random_range(lo..=hi);
        for k in 0..n_records {
            let (values, label) = if failure {
                if s.coin(FAILURE_READY_SHARE) {
                    let premature = s.coin(config.mislabel_bias_failure_cohort);
                    let v = sample_conditioned(&mut s, &cols, &patient, width, u8::from(premature));
                    (v, 0)
                } else {
                    (sample_conditioned(&mut s, &cols, &patient, width, 1), 1)
                }
            } else {
                let v = sample_record(&mut s, &cols, &patient, width);
                let latent = u8::from(latent_score_with(&cols, &v) > 0.0);
                let label = if s.coin(config.label_noise) { 1 - latent } else { latent };
                (v, label)
            };
            instances.push(Instance {
                id: format!("{patient_id}-{:02}", k + 1),
                patient_id: patient_id.clone(),
                values: values.into_iter().map(Some).collect(),
                label,
                extubation_failure: failure,
            });
        }
    }
    let mut ds = Dataset::new(schema.clone(), instances)?;
    ds.split_by_patient(config.test_fraction, config.seed ^ SPLIT_SEED_MIX)?;
    Ok(ds)
}
