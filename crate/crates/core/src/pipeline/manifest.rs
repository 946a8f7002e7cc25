//! The run manifest: every emitted file with its hash and producer.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub content_hash: String,
    pub command: String,
    /// Model name to model content hash, for every model the file depends on.
    pub models: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub allow_dq_fail: bool,
    /// Sorted by path.
    pub artifacts: Vec<ManifestEntry>,
    /// Wall-clock seconds of the latest run of each command. The only
    /// field that differs between otherwise identical runs.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn empty(config_hash: &str, allow_dq_fail: bool) -> Self {
        RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            allow_dq_fail,
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    /// The manifest in `out`, or an empty one.
    pub fn load_or_empty(out: &Path, config_hash: &str, allow_dq_fail: bool) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::empty(config_hash, allow_dq_fail));
        }
        Self::load(out)
    }

    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        serde_json::from_slice(&util::read_bytes(&path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        util::write_bytes(&out.join(MANIFEST_FILE), &util::to_pretty_json(self)?)
    }

    pub fn entry(&self, path: &str) -> Option<&ManifestEntry> {
        self.artifacts.iter().find(|e| e.path == path)
    }

    /// Replaces the entries of `command`. Files it produced last time but
    /// not this time are deleted so the directory matches the manifest.
    pub fn record(&mut self, out: &Path, command: &str, entries: Vec<ManifestEntry>, seconds: f64) -> Result<()> {
        let (old, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut self.artifacts)
            .into_iter()
            .partition(|e| e.command == command || entries.iter().any(|n| n.path == e.path));
        for e in old {
            if !entries.iter().any(|n| n.path == e.path) {
                let p = out.join(&e.path);
                if p.exists() {
                    std::fs::remove_file(&p).map_err(|err| Error::io(&p, err))?;
                }
            }
        }
        self.artifacts = keep;
        self.artifacts.extend(entries);
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        self.timings.insert(command.to_string(), seconds);
        Ok(())
    }

    /// The manifest without timings, for comparing runs.
    pub fn without_timings(&self) -> Self {
        RunManifest {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }
}
