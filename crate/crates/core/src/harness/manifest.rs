use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FluxError, Result};
use crate::federation::ExperimentConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reads and validates an experiment config. Errors name the offending
/// field.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FluxError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| FluxError::Config(format!("invalid config: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// SHA-256 of a canonical JSON rendering (sorted keys, no whitespace), so
/// key order in the source document does not matter.
pub fn canonical_hash<S: Serialize>(value: &S) -> Result<String> {
    // serde_json's default map is ordered by key
    let canonical = serde_json::to_value(value)?;
    let bytes = serde_json::to_vec(&canonical)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    canonical_hash(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(config_hash: String) -> Self {
        Self {
            config_hash,
            tool_version: TOOL_VERSION.to_string(),
            started_at: now(),
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, outputs: Vec<String>) {
        self.finished_at = now();
        self.outputs = outputs;
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
