//! Service configuration: one TOML or JSON document. `AMLTRIAGE_PORT` and
//! `AMLTRIAGE_DATA_DIR` override the port and data directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use triage_core::eval::ExperimentConfig;
use triage_core::pipeline::{ConfigError, PipelineConfig};
use triage_core::simgen::WorldConfig;
use triage_core::AclTag;

pub const ENV_PORT: &str = "AMLTRIAGE_PORT";
pub const ENV_DATA_DIR: &str = "AMLTRIAGE_DATA_DIR";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_PAGE_SIZE: usize = 50;
/// Rewrite the snapshot after this many state changes.
pub const DEFAULT_SNAPSHOT_EVERY: usize = 25;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{name} = {value:?} is not valid")]
    Env { name: &'static str, value: String },
    #[error(transparent)]
    Pipeline(#[from] ConfigError),
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    Split((f64, f64, f64)),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub world: WorldConfig,
    /// Train, validation and test fractions of the chronological split.
    pub split: (f64, f64, f64),
    pub pipeline: PipelineConfig,
    /// Evaluation settings; its pipeline is replaced by `pipeline`.
    pub experiment: ExperimentConfig,
    /// Principal name to retrieval clearance. Empty admits any principal at
    /// the pipeline's clearance.
    pub principals: BTreeMap<String, AclTag>,
    pub page_size: usize,
    pub snapshot_every: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("data"),
            world: WorldConfig::default(),
            split: (0.7, 0.1, 0.2),
            pipeline: PipelineConfig::default(),
            experiment: ExperimentConfig::default(),
            principals: BTreeMap::new(),
            page_size: DEFAULT_PAGE_SIZE,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }
}

impl ServiceConfig {
    /// Parses by extension: `.toml`, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io { path: path.into(), source })?;
        let parse = |message: String| ConfigFileError::Parse { path: path.into(), message };
        let config: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| parse(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?
        };
        config.check()?;
        Ok(config)
    }

    /// Applies the environment overrides through `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigFileError> {
        if let Some(v) = get(ENV_PORT) {
            self.port = v.parse().map_err(|_| ConfigFileError::Env { name: ENV_PORT, value: v })?;
        }
        if let Some(v) = get(ENV_DATA_DIR) {
            if v.is_empty() {
                return Err(ConfigFileError::Env { name: ENV_DATA_DIR, value: v });
            }
            self.data_dir = PathBuf::from(v);
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigFileError> {
        let (a, b, c) = self.split;
        if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(ConfigFileError::Split(self.split));
        }
        self.pipeline.check()?;
        Ok(())
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig { pipeline: self.pipeline.clone(), ..self.experiment.clone() }
    }
}

/// JSON merge patch: objects merge key by key, `null` deletes, anything
/// else replaces.
pub fn merge_patch(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                if v.is_null() {
                    b.remove(k);
                } else {
                    merge_patch(b.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// `base` with `overrides` merged in, checked.
pub fn pipeline_with(base: &PipelineConfig, overrides: &Value) -> Result<PipelineConfig, String> {
    let mut v = serde_json::to_value(base).map_err(|e| e.to_string())?;
    merge_patch(&mut v, overrides);
    let config: PipelineConfig = serde_json::from_value(v).map_err(|e| e.to_string())?;
    config.check().map_err(|e| e.to_string())?;
    Ok(config)
}
