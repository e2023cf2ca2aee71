use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// What was run, with which configuration, and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: Vec<String>,
    pub config_digest: String,
    pub config_sources: BTreeMap<String, String>,
    #[serde(default)]
    pub template_checksums: BTreeMap<String, String>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    pub started_at: String,
    pub finished_at: String,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, serde_json::Value>,
}

/// One artifact-producing command run: owns the output directory and writes exactly one
/// manifest when finished.
pub struct Run {
    out_dir: PathBuf,
    started: DateTime<Utc>,
    outputs: Vec<String>,
    pub template_checksums: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl Run {
    pub fn start(out_dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::invalid(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            started: Utc::now(),
            outputs: Vec::new(),
            template_checksums: BTreeMap::new(),
            seeds: BTreeMap::new(),
            notes: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.out_dir
    }

    /// Path of an output file inside the run directory, registered for the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.out_dir.join(name)
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.notes.insert(key.to_string(), v);
        }
    }

    pub fn finish(self, settings: &Settings) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect(),
            config_digest: settings.digest(),
            config_sources: settings.sources.clone(),
            template_checksums: self.template_checksums,
            seeds: self.seeds,
            started_at: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            outputs: self.outputs,
            notes: self.notes,
        };
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}
