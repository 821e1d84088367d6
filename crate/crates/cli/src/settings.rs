//! Config file loading, flag overrides and provider construction.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use typecascade::config::{BackendConfig, EmbeddingConfig, RunConfig};
use typecascade::embedding::{CachedProvider, EmbeddingProvider, HashingProvider, HttpProvider};
use typecascade::llmgate::{LlmGate, ModelRole};
use typecascade::Real;

use crate::CliError;

/// Flags shared by every command that runs the pipeline. Each one overrides
/// the matching field of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Descending threshold schedule, e.g. 0.99,0.9,0.75.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub tau_name: Option<f64>,
    #[arg(long)]
    pub tau_value: Option<f64>,
    /// Values sampled per prompt (k).
    #[arg(long)]
    pub value_samples: Option<usize>,
    /// Co-occurring column names shown to discovery (N).
    #[arg(long)]
    pub context_columns: Option<usize>,
    /// Histogram bins of numeric signatures (b).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Table context rows shown to annotation (l).
    #[arg(long)]
    pub context_rows: Option<usize>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    /// Most index candidates offered in one prompt.
    #[arg(long)]
    pub fallback_cap: Option<usize>,
    /// Send single leftover columns to discovery too.
    #[arg(long)]
    pub singleton_discovery: bool,
    #[arg(long)]
    pub numeric_kind_fraction: Option<f64>,
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub baseline_rows: Option<usize>,
    #[arg(long)]
    pub baseline_seed: Option<u64>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    /// Bind every model role to this mock fixture file.
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
    /// Persist text embeddings here between runs.
    #[arg(long, value_name = "FILE")]
    pub embedding_cache: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))
                    .map_err(CliError::usage)?;
                toml::from_str::<RunConfig>(&text)
                    .with_context(|| format!("invalid config {}", p.display()))
                    .map_err(CliError::usage)?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(schedule => schedule, value_samples => value_samples, context_columns => context_columns,
             bins => histogram_bins, context_rows => table_context_rows,
             min_cluster_size => min_cluster_size, fallback_cap => fallback_cap,
             numeric_kind_fraction => numeric_kind_fraction, delimiter => delimiter,
             baseline_rows => baseline_rows, baseline_seed => baseline_seed,
             max_attempts => max_attempts, backoff_ms => backoff_ms);
        if self.tau_name.is_some() {
            cfg.tau_name = self.tau_name;
        }
        if self.tau_value.is_some() {
            cfg.tau_value = self.tau_value;
        }
        if self.singleton_discovery {
            cfg.singleton_discovery = true;
        }
        if self.embedding_cache.is_some() {
            cfg.embedding_cache = self.embedding_cache.clone();
        }
        if let Some(f) = &self.mock {
            for role in ModelRole::ALL {
                cfg.role_mut(role).backend = Some(BackendConfig::Mock { fixture: f.clone() });
            }
        }
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }
}

/// Checks environment variables and builds the gate for `roles`.
pub fn gate_for(cfg: &RunConfig, roles: &[ModelRole]) -> Result<LlmGate, CliError> {
    cfg.check_env(roles).map_err(CliError::usage)?;
    LlmGate::from_config(cfg).map_err(CliError::usage)
}

pub type Provider = CachedProvider<Box<dyn EmbeddingProvider<Real>>>;

pub fn embedding_provider(cfg: &RunConfig) -> Result<Provider, CliError> {
    cfg.check_env(&[]).map_err(CliError::usage)?;
    let inner: Box<dyn EmbeddingProvider<Real>> = match &cfg.embedding {
        EmbeddingConfig::Hashing { dimension, seed } => Box::new(HashingProvider::new(*dimension, *seed)),
        EmbeddingConfig::Http {
            name,
            endpoint,
            auth_header,
            api_key_env,
            dimension,
            batch_size,
        } => {
            let key = std::env::var(api_key_env).map_err(|_| {
                CliError::usage(anyhow::anyhow!("environment variable `{api_key_env}` is not set"))
            })?;
            Box::new(HttpProvider::new(
                name.clone(),
                endpoint.clone(),
                Some((auth_header.clone(), key)),
                *dimension,
                *batch_size,
            ))
        }
    };
    match &cfg.embedding_cache {
        Some(p) => CachedProvider::load(inner, p).map_err(CliError::data),
        None => Ok(CachedProvider::new(inner)),
    }
}

pub fn save_cache(cfg: &RunConfig, provider: &Provider) -> Result<(), CliError> {
    if let Some(p) = &cfg.embedding_cache {
        provider.save(p).map_err(CliError::data)?;
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(CliError::data)
}
