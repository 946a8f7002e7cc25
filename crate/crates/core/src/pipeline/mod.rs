//! The command pipeline behind the `xai-assure` binary.
//!
//! Every command reads its inputs from the output directory, writes its
//! reports there and records them in `manifest.json`. Downstream commands
//! refuse missing or altered inputs.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    ArchSpec, AttributionSettings, CounterfactualSettings, InfluenceSettings, ModelSpec, PipelineConfig,
    RobustnessSettings, BUILTIN_SCHEMA,
};
pub use manifest::{ManifestEntry, RunManifest, MANIFEST_FILE};

use crate::attribution::{global_importance, local_importance, Baseline, GlobalImportanceReport, LocalImportance};
use crate::counterfactual::{generate_counterfactuals, robustness_score, sample_split, CfTable, CounterfactualSet};
use crate::data::{
    default_weaning_schema, generate_cohort, quality_report, DataSchema, Dataset, Instance, Split, SPLIT_SEED_MIX,
};
use crate::error::{Error, Result};
use crate::influence::{cohort_influence_summary, top_influencers, CohortInfluenceSummary, InfluenceReport};
use crate::model::{compare_trained, train_with_encoder, CompareOptions, InputEncoder, TrainedModel, TrainingConfig};
use crate::safetycase::{
    bind_evidence_in, build_weaning_pattern, export_dot, status_in, validate, ArtifactKind, AssuranceStatus,
    EvidenceArtifact, ValidationFinding,
};
use crate::util;

pub const SCHEMA_FILE: &str = "schema.json";
pub const COHORT_FILE: &str = "cohort.csv";
pub const QUALITY_FILE: &str = "quality_report.json";
pub const METRICS_FILE: &str = "metrics_report.json";
pub const AUC_CSV: &str = "auc.csv";
pub const INFLUENCE_FILE: &str = "influence_report.json";
pub const INFLUENCE_CSV: &str = "influence.csv";
pub const ATTRIBUTION_FILE: &str = "attribution_report.json";
pub const ATTRIBUTION_CSV: &str = "attribution_global.csv";
pub const CF_FILE: &str = "cf_report.json";
pub const CF_CSV: &str = "cf_table.csv";
pub const ROBUSTNESS_FILE: &str = "robustness_report.json";
pub const GSN_JSON: &str = "safety_case.json";
pub const GSN_DOT: &str = "safety_case.dot";
pub const STATUS_FILE: &str = "safety_status.json";

pub fn model_file(name: &str) -> String {
    format!("models/{name}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenData,
    CheckData,
    Train,
    CompareModels,
    Influence,
    Attribute,
    Counterfactual,
    Robustness,
    SafetyCase,
}

impl Command {
    /// The order `run-all` follows.
    pub const CHAIN: [Command; 9] = [
        Command::GenData,
        Command::CheckData,
        Command::Train,
        Command::CompareModels,
        Command::Influence,
        Command::Attribute,
        Command::Counterfactual,
        Command::Robustness,
        Command::SafetyCase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::CheckData => "check-data",
            Command::Train => "train",
            Command::CompareModels => "compare-models",
            Command::Influence => "influence",
            Command::Attribute => "attribute",
            Command::Counterfactual => "counterfactual",
            Command::Robustness => "robustness",
            Command::SafetyCase => "safety-case",
        }
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub command: Command,
    pub artifacts: Vec<String>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceArtifact {
    pub report: InfluenceReport,
    pub failure_cohort: CohortInfluenceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionArtifact {
    pub local: LocalImportance,
    pub global: GlobalImportanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualArtifact {
    pub set: CounterfactualSet,
    pub table: CfTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyCaseStatus {
    pub status: AssuranceStatus,
    pub findings: Vec<ValidationFinding>,
}

struct Output {
    path: String,
    bytes: Vec<u8>,
    models: BTreeMap<String, String>,
}

fn output(path: impl Into<String>, bytes: Vec<u8>) -> Output {
    Output {
        path: path.into(),
        bytes,
        models: BTreeMap::new(),
    }
}

fn output_for(path: impl Into<String>, bytes: Vec<u8>, m: &TrainedModel) -> Output {
    let mut o = output(path, bytes);
    o.models.insert(m.architecture.name().to_string(), m.content_hash());
    o
}

struct Produced {
    outputs: Vec<Output>,
    summary: String,
    /// Reported after the outputs are written.
    failure: Option<Error>,
}

fn produced(outputs: Vec<Output>, summary: String) -> Produced {
    Produced {
        outputs,
        summary,
        failure: None,
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    out: PathBuf,
    allow_dq_fail: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>, allow_dq_fail: bool) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config: config.effective(),
            out: out.into(),
            allow_dq_fail,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn run(&self, cmd: Command) -> Result<CommandOutcome> {
        let start = Instant::now();
        let mut manifest = RunManifest::load_or_empty(&self.out, &self.config.content_hash(), self.allow_dq_fail)?;
        let p = match cmd {
            Command::GenData => self.gen_data()?,
            Command::CheckData => self.check_data(&manifest)?,
            Command::Train => self.train(&manifest)?,
            Command::CompareModels => self.compare_models(&manifest)?,
            Command::Influence => self.influence(&manifest)?,
            Command::Attribute => self.attribute(&manifest)?,
            Command::Counterfactual => self.counterfactual(&manifest)?,
            Command::Robustness => self.robustness(&manifest)?,
            Command::SafetyCase => self.safety_case(&manifest)?,
        };
        let mut entries = Vec::with_capacity(p.outputs.len());
        for o in &p.outputs {
            util::write_bytes(&self.out.join(&o.path), &o.bytes)?;
            entries.push(ManifestEntry {
                path: o.path.clone(),
                content_hash: util::sha256_hex(&o.bytes),
                command: cmd.name().to_string(),
                models: o.models.clone(),
            });
        }
        manifest.config_hash = self.config.content_hash();
        manifest.allow_dq_fail = self.allow_dq_fail;
        manifest.record(&self.out, cmd.name(), entries, start.elapsed().as_secs_f64())?;
        manifest.save(&self.out)?;
        if let Some(e) = p.failure {
            return Err(e);
        }
        Ok(CommandOutcome {
            command: cmd,
            artifacts: p.outputs.into_iter().map(|o| o.path).collect(),
            summary: p.summary,
        })
    }

    /// Runs the whole chain, stopping at the first failing command.
    pub fn run_all(&self) -> Result<Vec<CommandOutcome>> {
        Command::CHAIN.iter().map(|&c| self.run(c)).collect()
    }

    /// Reads an upstream artifact, checking it against the manifest.
    fn input(&self, manifest: &RunManifest, rel: &str, producer: Command) -> Result<Vec<u8>> {
        let path = self.out.join(rel);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                path,
                producer: producer.name().to_string(),
            });
        }
        let bytes = util::read_bytes(&path)?;
        if let Some(e) = manifest.entry(rel) {
            let current = util::sha256_hex(&bytes);
            if current != e.content_hash {
                return Err(Error::StaleArtifact {
                    path,
                    recorded: e.content_hash.clone(),
                    current,
                });
            }
        }
        Ok(bytes)
    }

    fn dataset(&self, manifest: &RunManifest) -> Result<Dataset> {
        let schema = DataSchema::from_json(&self.input(manifest, SCHEMA_FILE, Command::GenData)?)?;
        let csv = self.input(manifest, COHORT_FILE, Command::GenData)?;
        let mut ds = Dataset::read_csv(&schema, csv.as_slice())?;
        let c = &self.config.cohort;
        ds.split_by_patient(c.test_fraction, c.seed ^ SPLIT_SEED_MIX)?;
        Ok(ds)
    }

    fn model(&self, manifest: &RunManifest, ds: &Dataset, name: &str) -> Result<TrainedModel> {
        let rel = model_file(name);
        let m = TrainedModel::from_json(&self.input(manifest, &rel, Command::Train)?)?;
        let current = ds.schema.content_hash();
        if m.schema_hash != current {
            return Err(Error::StaleArtifact {
                path: self.out.join(rel),
                recorded: m.schema_hash,
                current,
            });
        }
        Ok(m)
    }

    fn test_instance<'a>(&self, ds: &'a Dataset, id: Option<&str>) -> Result<&'a Instance> {
        match id {
            Some(id) => ds.get(id),
            None => ds
                .test()
                .next()
                .ok_or_else(|| Error::Data("test split is empty".into())),
        }
    }

    fn gen_data(&self) -> Result<Produced> {
        let schema = if self.config.schema == BUILTIN_SCHEMA {
            default_weaning_schema()
        } else {
            DataSchema::from_json(&util::read_bytes(Path::new(&self.config.schema))?)?
        };
        let ds = generate_cohort(&self.config.cohort, &schema)?;
        let summary = format!(
            "{} records ({} train, {} test) from {} patients",
            ds.len(),
            ds.indices(Split::Train).len(),
            ds.indices(Split::Test).len(),
            self.config.cohort.n_patients
        );
        Ok(produced(
            vec![output(SCHEMA_FILE, schema.to_json()?), output(COHORT_FILE, ds.to_csv_bytes()?)],
            summary,
        ))
    }

    fn check_data(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let report = quality_report(&ds, &self.config.quality)?;
        let fails = report
            .findings()
            .filter(|f| f.severity == crate::data::Severity::Fail)
            .count();
        let summary = format!(
            "{} findings, {fails} fail-severity; {}",
            report.total_findings,
            if report.passed { "passed" } else { "failed" }
        );
        let failure = (!report.passed && !self.allow_dq_fail).then(|| {
            Error::Data(format!(
                "data quality check failed with {fails} fail-severity finding(s); see {QUALITY_FILE} or pass --allow-dq-fail"
            ))
        });
        Ok(Produced {
            outputs: vec![output(QUALITY_FILE, util::to_pretty_json(&report)?)],
            summary,
            failure,
        })
    }

    fn train(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let encoder = InputEncoder::fit(&ds)?;
        let mut outputs = Vec::new();
        let mut lines = Vec::new();
        for spec in &self.config.models {
            let arch = spec.architecture.build(encoder.width);
            let m = train_with_encoder(&ds, &arch, &spec.training, encoder.clone()).map_err(|e| Error::Model {
                model: spec.name().to_string(),
                source: Box::new(e),
            })?;
            lines.push(format!(
                "{}: {} parameters, final loss {:.4}",
                spec.name(),
                m.parameter_count(),
                m.training_log.final_loss
            ));
            outputs.push(output_for(model_file(spec.name()), m.to_json()?, &m));
        }
        Ok(produced(outputs, lines.join("; ")))
    }

    fn compare_models(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let models = self
            .config
            .models
            .iter()
            .map(|s| self.model(manifest, &ds, s.name()))
            .collect::<Result<Vec<_>>>()?;
        let control = self
            .config
            .models
            .iter()
            .find(|s| s.name() == "logreg")
            .map(|s| s.training.clone())
            .unwrap_or_else(|| TrainingConfig::newton(1e-3, self.config.seed));
        let options = CompareOptions {
            control: Some(control),
            ..CompareOptions::default()
        };
        let report = compare_trained(&ds, &models, &options)?;
        let summary = report
            .models
            .iter()
            .map(|m| format!("{} AUC {:.3}", m.model, m.auc))
            .chain(report.random_label_control.as_ref().map(|c| format!("control AUC {:.3}", c.mean_auc)))
            .collect::<Vec<_>>()
            .join(", ");
        let mut metrics = output(METRICS_FILE, util::to_pretty_json(&report)?);
        for m in &models {
            metrics.models.insert(m.architecture.name().to_string(), m.content_hash());
        }
        let mut auc = output(AUC_CSV, report.auc_csv().into_bytes());
        auc.models = metrics.models.clone();
        Ok(produced(vec![metrics, auc], summary))
    }

    fn influence(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let settings = &self.config.influence;
        let m = self.model(manifest, &ds, &settings.model)?;
        let test_id = match &settings.test_id {
            Some(id) => id.clone(),
            None => highest_loss_test(&m, &ds)?,
        };
        let k = settings.top_k.min(ds.indices(Split::Train).len());
        let report = top_influencers(&m, &ds, &test_id, k, &self.config.ihvp)?;
        let flag = ds.schema.cohort_flags.extubation_failure.clone();
        let failure_cohort = cohort_influence_summary(&m, &ds, &test_id, &flag, &self.config.ihvp)?;
        let summary = format!(
            "test record {test_id}: top {k} of {} training records; failure cohort {} harmful vs {} helpful",
            report.train_size, failure_cohort.count_harmful, failure_cohort.count_helpful
        );
        let csv = report.to_csv().into_bytes();
        let artifact = InfluenceArtifact { report, failure_cohort };
        Ok(produced(
            vec![
                output_for(INFLUENCE_FILE, util::to_pretty_json(&artifact)?, &m),
                output_for(INFLUENCE_CSV, csv, &m),
            ],
            summary,
        ))
    }

    fn attribute(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let s = &self.config.attribution;
        let m = self.model(manifest, &ds, &s.model)?;
        let baseline = Baseline::of_kind(&m, s.baseline)?;
        let x = self.test_instance(&ds, s.instance_id.as_deref())?;
        let local = local_importance(&m, x, s.method.name(), &baseline, &s.options)?;
        let mut taken = 0usize;
        let sample = ds.filter(|_, split| {
            let keep = split == Split::Test && taken < s.sample_size;
            taken += usize::from(keep);
            keep
        });
        let global = global_importance(&m, &sample, Split::Test, s.method, &baseline, &s.options)?;
        let summary = format!(
            "{} on {} ({} test records); top features: {}",
            s.method.name(),
            s.model,
            global.sample_count,
            global.ranking.iter().take(3).cloned().collect::<Vec<_>>().join(", ")
        );
        let csv = global.to_csv().into_bytes();
        let artifact = AttributionArtifact { local, global };
        Ok(produced(
            vec![
                output_for(ATTRIBUTION_FILE, util::to_pretty_json(&artifact)?, &m),
                output_for(ATTRIBUTION_CSV, csv, &m),
            ],
            summary,
        ))
    }

    fn counterfactual(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let s = &self.config.counterfactual;
        let m = self.model(manifest, &ds, &s.model)?;
        let x = match &s.instance_id {
            Some(id) => ds.get(id)?,
            None => {
                let mut chosen = None;
                for inst in ds.test() {
                    if m.predict_proba(inst)? >= s.query.threshold {
                        chosen = Some(inst);
                        break;
                    }
                }
                match chosen {
                    Some(c) => c,
                    None => self.test_instance(&ds, None)?,
                }
            }
        };
        let set = generate_counterfactuals(&m, &ds.schema, x, &s.query)?;
        let table = CfTable::new(&set, &ds.schema, &m);
        let summary = format!(
            "record {}: {:?}, {} counterfactual(s), nearest distance {}",
            set.instance_id,
            set.status,
            set.examples.len(),
            set.nearest().map_or("n/a".to_string(), |e| format!("{:.3}", e.distance))
        );
        let csv = table.to_csv().into_bytes();
        let artifact = CounterfactualArtifact { set, table };
        Ok(produced(
            vec![
                output_for(CF_FILE, util::to_pretty_json(&artifact)?, &m),
                output_for(CF_CSV, csv, &m),
            ],
            summary,
        ))
    }

    fn robustness(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let m = self.model(manifest, &ds, &self.config.counterfactual.model)?;
        let r = &self.config.robustness;
        let sample = sample_split(&ds, Split::Test, r.sample_size);
        let report = robustness_score(&m, &ds.schema, &sample, &self.config.counterfactual.query, r.spof_resolution)?;
        let summary = format!(
            "{} records, score {}, {} without counterfactual, {} SPOF witness(es)",
            report.sample_size,
            report.score.map_or("n/a".to_string(), |s| format!("{s:.3}")),
            report.no_counterfactual.len(),
            report.spof_witnesses.len()
        );
        Ok(produced(
            vec![output_for(ROBUSTNESS_FILE, report.to_json()?, &m)],
            summary,
        ))
    }

    fn safety_case(&self, manifest: &RunManifest) -> Result<Produced> {
        let ds = self.dataset(manifest)?;
        let evidence: [(&str, &str, ArtifactKind, Command, bool); 6] = [
            ("S2", METRICS_FILE, ArtifactKind::MetricsReport, Command::CompareModels, false),
            ("S3", INFLUENCE_FILE, ArtifactKind::InfluenceReport, Command::Influence, false),
            ("S4", METRICS_FILE, ArtifactKind::MetricsReport, Command::CompareModels, false),
            ("S5", ATTRIBUTION_FILE, ArtifactKind::AttributionReport, Command::Attribute, false),
            // Counterfactuals only partly demonstrate robustness.
            ("S6", CF_FILE, ArtifactKind::CfReport, Command::Counterfactual, true),
            ("S6", ROBUSTNESS_FILE, ArtifactKind::RobustnessReport, Command::Robustness, true),
        ];
        let mut g = build_weaning_pattern();
        for (solution, rel, kind, producer, partial) in evidence {
            self.input(manifest, rel, producer)?;
            let entry = manifest.entry(rel);
            let mut artifact = EvidenceArtifact::new(kind, rel).partial(partial);
            for (name, recorded) in entry.map(|e| &e.models).into_iter().flatten() {
                let current = self.model(manifest, &ds, name)?.content_hash();
                if &current != recorded {
                    return Err(Error::StaleArtifact {
                        path: self.out.join(rel),
                        recorded: recorded.clone(),
                        current,
                    });
                }
                if entry.is_some_and(|e| e.models.len() == 1) {
                    artifact = artifact.with_model_hash(current);
                }
            }
            g = bind_evidence_in(&g, solution, artifact, &self.out)?;
        }
        let findings = validate(&g);
        let status = status_in(&g, &self.out)?;
        let summary = status
            .goals
            .iter()
            .map(|(id, s)| format!("{id} {s}"))
            .collect::<Vec<_>>()
            .join(", ");
        let report = SafetyCaseStatus { status, findings };
        Ok(produced(
            vec![
                output(GSN_JSON, g.to_json()?),
                output(GSN_DOT, export_dot(&g).into_bytes()),
                output(STATUS_FILE, util::to_pretty_json(&report)?),
            ],
            summary,
        ))
    }
}

/// The test record the model fits worst; ties go to the earlier record.
pub fn highest_loss_test(m: &TrainedModel, ds: &Dataset) -> Result<String> {
    let mut best: Option<(f64, &str)> = None;
    for inst in ds.test() {
        let loss = m.loss(inst)?;
        if best.is_none_or(|(b, _)| loss > b) {
            best = Some((loss, &inst.id));
        }
    }
    best.map(|(_, id)| id.to_string())
        .ok_or_else(|| Error::Data("test split is empty".into()))
}
