//! Run configuration: one JSON document for every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionMethod, AttributionOptions, BaselineKind};
use crate::counterfactual::CounterfactualQuery;
use crate::data::{CohortConfig, QualityConfig};
use crate::error::{Error, Result};
use crate::influence::IhvpConfig;
use crate::model::{Activation, HiddenLayer, ModelArchitecture, TrainingConfig};
use crate::util;

pub const BUILTIN_SCHEMA: &str = "builtin";

/// Architecture without its input width, which comes from the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchSpec {
    Logreg,
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
    },
    Conv1d {
        channels: usize,
        kernel_size: usize,
        activation: Activation,
    },
}

impl ArchSpec {
    pub fn build(&self, input_width: usize) -> ModelArchitecture {
        match self {
            ArchSpec::Logreg => ModelArchitecture::logreg(input_width),
            ArchSpec::Mlp { hidden, activation } => ModelArchitecture::Mlp {
                input_width,
                hidden: hidden
                    .iter()
                    .map(|&width| HiddenLayer {
                        width,
                        activation: *activation,
                    })
                    .collect(),
            },
            ArchSpec::Conv1d {
                channels,
                kernel_size,
                activation,
            } => ModelArchitecture::Conv1d {
                input_width,
                window: 1,
                channels: *channels,
                kernel_size: *kernel_size,
                activation: *activation,
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArchSpec::Logreg => "logreg",
            ArchSpec::Mlp { .. } => "mlp",
            ArchSpec::Conv1d { .. } => "conv1d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: ArchSpec,
    pub training: TrainingConfig,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        self.architecture.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceSettings {
    pub model: String,
    /// Defaults to the test record with the highest loss.
    pub test_id: Option<String>,
    pub top_k: usize,
}

impl Default for InfluenceSettings {
    fn default() -> Self {
        InfluenceSettings {
            model: "logreg".into(),
            test_id: None,
            top_k: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionSettings {
    pub model: String,
    pub method: AttributionMethod,
    pub baseline: BaselineKind,
    pub options: AttributionOptions,
    /// Defaults to the first test record.
    pub instance_id: Option<String>,
    /// Test records averaged into the global ranking.
    pub sample_size: usize,
}

impl Default for AttributionSettings {
    fn default() -> Self {
        AttributionSettings {
            model: "mlp".into(),
            method: AttributionMethod::IntegratedGradients,
            baseline: BaselineKind::TrainingMedian,
            options: AttributionOptions::default(),
            instance_id: None,
            sample_size: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualSettings {
    pub model: String,
    /// Defaults to the first test record predicted to remain intubated.
    pub instance_id: Option<String>,
    pub query: CounterfactualQuery,
}

impl Default for CounterfactualSettings {
    fn default() -> Self {
        CounterfactualSettings {
            model: "mlp".into(),
            instance_id: None,
            query: CounterfactualQuery::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSettings {
    pub sample_size: usize,
    pub spof_resolution: usize,
}

impl Default for RobustnessSettings {
    fn default() -> Self {
        RobustnessSettings {
            sample_size: 10,
            spof_resolution: crate::counterfactual::DEFAULT_SPOF_RESOLUTION,
        }
    }
}

/// The top-level `seed` overrides every nested seed when a run starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// `"builtin"` or the path of a schema JSON file.
    pub schema: String,
    pub cohort: CohortConfig,
    pub quality: QualityConfig,
    pub models: Vec<ModelSpec>,
    pub ihvp: IhvpConfig,
    pub influence: InfluenceSettings,
    pub attribution: AttributionSettings,
    pub counterfactual: CounterfactualSettings,
    pub robustness: RobustnessSettings,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let adam = TrainingConfig {
            epochs: 100,
            ..TrainingConfig::default()
        };
        PipelineConfig {
            seed: 1,
            schema: BUILTIN_SCHEMA.into(),
            cohort: CohortConfig::default(),
            quality: QualityConfig::default(),
            models: vec![
                ModelSpec {
                    architecture: ArchSpec::Logreg,
                    training: TrainingConfig::newton(1e-3, 1),
                },
                ModelSpec {
                    architecture: ArchSpec::Mlp {
                        hidden: vec![16],
                        activation: Activation::Relu,
                    },
                    training: adam.clone(),
                },
                ModelSpec {
                    architecture: ArchSpec::Conv1d {
                        channels: 8,
                        kernel_size: 2,
                        activation: Activation::Relu,
                    },
                    training: adam,
                },
            ],
            ihvp: IhvpConfig::default(),
            influence: InfluenceSettings::default(),
            attribution: AttributionSettings::default(),
            counterfactual: CounterfactualSettings::default(),
            robustness: RobustnessSettings::default(),
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Parses JSON; errors carry the path of the offending field.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("config field `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&util::read_bytes(path)?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        util::to_pretty_json(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Copy with the master seed pushed into every stage.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        c.cohort.seed = c.seed;
        for m in &mut c.models {
            m.training.seed = c.seed;
        }
        c.counterfactual.query.seed = c.seed;
        c
    }

    /// Hash of the effective configuration; the output directory is left
    /// out so that runs into different directories compare equal.
    pub fn content_hash(&self) -> String {
        let mut c = self.effective();
        c.out_dir = None;
        util::canonical_hash(&c)
    }

    pub fn model(&self, name: &str) -> Result<&ModelSpec> {
        self.models
            .iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("no model named `{name}` in the config")))
    }

    pub fn validate(&self) -> Result<()> {
        self.cohort.validate()?;
        self.ihvp.validate()?;
        self.counterfactual.query.validate()?;
        if self.schema != BUILTIN_SCHEMA && !Path::new(&self.schema).is_file() {
            return Err(Error::Config(format!("schema file `{}` does not exist", self.schema)));
        }
        if self.models.is_empty() {
            return Err(Error::Config("config lists no models".into()));
        }
        for (i, m) in self.models.iter().enumerate() {
            m.training.validate()?;
            if self.models[..i].iter().any(|o| o.name() == m.name()) {
                return Err(Error::Config(format!("model `{}` is listed twice", m.name())));
            }
        }
        for (what, name) in [
            ("influence", &self.influence.model),
            ("attribution", &self.attribution.model),
            ("counterfactual", &self.counterfactual.model),
        ] {
            self.model(name)
                .map_err(|_| Error::Config(format!("{what}.model `{name}` is not among the configured models")))?;
        }
        if self.influence.top_k == 0 {
            return Err(Error::Config("influence.top_k must be >= 1".into()));
        }
        if self.attribution.sample_size == 0 || self.robustness.sample_size == 0 {
            return Err(Error::Config("sample sizes must be >= 1".into()));
        }
        if self.robustness.spof_resolution < 2 {
            return Err(Error::Config("robustness.spof_resolution must be >= 2".into()));
        }
        Ok(())
    }
}
