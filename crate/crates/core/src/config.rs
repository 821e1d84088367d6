//! Run configuration. Defaults follow the standard hyperparameter table
//! (k=10 value samples, N=5 context columns, b=100 bins, l=3 context rows,
//! minimum cluster size 2, discovery temperature 0.3, annotation/judge 0.0).

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::IngestConfig;
use crate::llmgate::ModelRole;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("schedule must be non-empty")]
    EmptySchedule,
    #[error("schedule must be strictly decreasing within (0, 1], got {0:?}")]
    BadSchedule(Vec<f64>),
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("{field} must be at least {min}")]
    TooSmall { field: &'static str, min: usize },
    #[error("numeric_kind_fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("no backend bound to role {0}")]
    UnboundRole(ModelRole),
    #[error("environment variable `{var}` required by {what} is not set")]
    MissingEnv { var: String, what: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Canned answers from a fixture file.
    Mock { fixture: PathBuf },
    /// OpenAI-compatible chat completions endpoint.
    Http {
        endpoint: String,
        model: String,
        api_key_env: String,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
    },
}

fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleConfig {
    pub backend: Option<BackendConfig>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingConfig {
    Hashing {
        dimension: usize,
        seed: u64,
    },
    Http {
        name: String,
        endpoint: String,
        auth_header: String,
        api_key_env: String,
        dimension: usize,
        batch_size: usize,
    },
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Hashing {
            dimension: 256,
            seed: 0x5eed,
        }
    }
}

/// Per-million-token prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Rate {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Pricing {
    pub default: Rate,
    pub per_role: BTreeMap<ModelRole, Rate>,
}

impl Pricing {
    pub fn rate(&self, role: ModelRole) -> Rate {
        self.per_role.get(&role).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schedule: Vec<f64>,
    pub tau_name: Option<f64>,
    pub tau_value: Option<f64>,
    pub value_samples: usize,
    pub context_columns: usize,
    pub histogram_bins: usize,
    pub z_clip: f64,
    pub table_context_rows: usize,
    pub min_cluster_size: usize,
    pub max_embed_values: usize,
    pub fallback_cap: usize,
    pub singleton_discovery: bool,
    pub numeric_kind_fraction: f64,
    pub null_markers: Vec<String>,
    pub delimiter: char,
    pub banned_generics: Vec<String>,
    pub baseline_rows: usize,
    pub baseline_seed: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub discovery: RoleConfig,
    pub annotation: RoleConfig,
    pub judge: RoleConfig,
    pub embedding: EmbeddingConfig,
    pub embedding_cache: Option<PathBuf>,
    pub pricing: Pricing,
}

pub const DEFAULT_SCHEDULE: [f64; 3] = [0.99, 0.9, 0.75];

pub fn default_null_markers() -> Vec<String> {
    ["", "NA", "N/A", "NaN", "null"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn default_banned_generics() -> Vec<String> {
    ["string", "integer", "number", "text", "float", "value", "id"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: DEFAULT_SCHEDULE.to_vec(),
            tau_name: None,
            tau_value: None,
            value_samples: 10,
            context_columns: 5,
            histogram_bins: 100,
            z_clip: 4.0,
            table_context_rows: 3,
            min_cluster_size: 2,
            max_embed_values: 200,
            fallback_cap: 40,
            singleton_discovery: false,
            numeric_kind_fraction: 0.95,
            null_markers: default_null_markers(),
            delimiter: ',',
            banned_generics: default_banned_generics(),
            baseline_rows: 10,
            baseline_seed: 0,
            max_attempts: 3,
            backoff_ms: 500,
            discovery: RoleConfig {
                backend: None,
                temperature: 0.3,
            },
            annotation: RoleConfig {
                backend: None,
                temperature: 0.0,
            },
            judge: RoleConfig {
                backend: None,
                temperature: 0.0,
            },
            embedding: EmbeddingConfig::default(),
            embedding_cache: None,
            pricing: Pricing::default(),
        }
    }
}

pub fn validate_schedule(schedule: &[f64]) -> Result<(), ConfigError> {
    if schedule.is_empty() {
        return Err(ConfigError::EmptySchedule);
    }
    let in_range = schedule.iter().all(|t| *t > 0.0 && *t <= 1.0);
    let decreasing = schedule.windows(2).all(|w| w[0] > w[1]);
    if !in_range || !decreasing {
        return Err(ConfigError::BadSchedule(schedule.to_vec()));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_schedule(&self.schedule)?;
        for t in [self.tau_name, self.tau_value].into_iter().flatten() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(ConfigError::BadThreshold(t));
            }
        }
        for (field, v) in [
            ("value_samples", self.value_samples),
            ("histogram_bins", self.histogram_bins),
            ("min_cluster_size", self.min_cluster_size),
            ("max_embed_values", self.max_embed_values),
            ("max_attempts", self.max_attempts as usize),
        ] {
            if v < 1 {
                return Err(ConfigError::TooSmall { field, min: 1 });
            }
        }
        if !(self.numeric_kind_fraction > 0.0 && self.numeric_kind_fraction <= 1.0) {
            return Err(ConfigError::BadFraction(self.numeric_kind_fraction));
        }
        Ok(())
    }

    pub fn role(&self, role: ModelRole) -> &RoleConfig {
        match role {
            ModelRole::Discovery => &self.discovery,
            ModelRole::Annotation => &self.annotation,
            ModelRole::Judge => &self.judge,
        }
    }

    pub fn role_mut(&mut self, role: ModelRole) -> &mut RoleConfig {
        match role {
            ModelRole::Discovery => &mut self.discovery,
            ModelRole::Annotation => &mut self.annotation,
            ModelRole::Judge => &mut self.judge,
        }
    }

    /// Name-clustering threshold at a cascade stage.
    pub fn name_threshold(&self, stage_tau: f64) -> f64 {
        self.tau_name.unwrap_or(stage_tau)
    }

    pub fn value_threshold(&self, stage_tau: f64) -> f64 {
        self.tau_value.unwrap_or(stage_tau)
    }

    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            delimiter: self.delimiter as u8,
            null_markers: self.null_markers.clone(),
            numeric_kind_fraction: self.numeric_kind_fraction,
        }
    }

    /// Hex sha256 of the canonical JSON form. Stable across runs and platforms.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Every environment variable the configured backends read, checked up front.
    pub fn check_env(&self, roles: &[ModelRole]) -> Result<(), ConfigError> {
        for role in roles {
            match &self.role(*role).backend {
                None => return Err(ConfigError::UnboundRole(*role)),
                Some(BackendConfig::Http { api_key_env, .. }) => {
                    if std::env::var(api_key_env).is_err() {
                        return Err(ConfigError::MissingEnv {
                            var: api_key_env.clone(),
                            what: format!("{role} backend"),
                        });
                    }
                }
                Some(BackendConfig::Mock { .. }) => {}
            }
        }
        if let EmbeddingConfig::Http { api_key_env, .. } = &self.embedding {
            if std::env::var(api_key_env).is_err() {
                return Err(ConfigError::MissingEnv {
                    var: api_key_env.clone(),
                    what: "embedding provider".into(),
                });
            }
        }
        Ok(())
    }
}
