//! Pipeline configuration: a TOML file, then environment overrides.

use std::path::{Path, PathBuf};

use convsearch_core::metrics::RetrievalEvalConfig;
use convsearch_core::{GenerationParams, RetrievalModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendEndpoint, Capability, DEFAULT_BACKOFF_MS, DEFAULT_MAX_RETRIES, DEFAULT_TIMEOUT_MS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("inconsistent config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub bearer_token: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_ms: DEFAULT_BACKOFF_MS,
            bearer_token: None,
        }
    }
}

impl EndpointConfig {
    pub fn endpoint(&self, capability: Capability) -> BackendEndpoint {
        BackendEndpoint {
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
            bearer_token: self.bearer_token.clone(),
            ..BackendEndpoint::new(self.base_url.clone(), capability)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Backends {
    pub rewriter: Option<EndpointConfig>,
    pub reranker: Option<EndpointConfig>,
    pub summarizer: Option<EndpointConfig>,
}

/// Whether a failing stage falls back to its deterministic substitute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallbackPolicy {
    pub rewrite: bool,
    pub rerank: bool,
    pub summary: bool,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        Self {
            rewrite: true,
            rerank: true,
            summary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub first_stage_k: usize,
    pub rerank_depth: usize,
    #[serde(flatten)]
    pub metrics: RetrievalEvalConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            first_stage_k: 1000,
            rerank_depth: 1000,
            metrics: RetrievalEvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub index_dir: Option<PathBuf>,
    /// Line-delimited session log written by the service.
    pub session_log: Option<PathBuf>,
    pub retrieval: RetrievalModel,
    pub first_stage_k: usize,
    pub rerank: bool,
    pub rerank_depth: usize,
    pub rerank_batch_size: usize,
    pub generation: GenerationParams,
    pub backends: Backends,
    pub fallback: FallbackPolicy,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            index_dir: None,
            session_log: None,
            retrieval: RetrievalModel::lmd(),
            first_stage_k: 50,
            rerank: true,
            rerank_depth: 50,
            rerank_batch_size: convsearch_core::rerank::DEFAULT_BATCH_SIZE,
            generation: GenerationParams::default(),
            backends: Backends::default(),
            fallback: FallbackPolicy::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads `path` (defaults when `None`), applies process environment
    /// overrides and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?)?,
            None => Self::default(),
        };
        config.apply_env(|key| std::env::var(key).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// `REWRITER_URL`, `RERANKER_URL`, `SUMMARIZER_URL` and the matching
    /// `*_TIMEOUT_MS` variables.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let slots = [
            ("REWRITER", &mut self.backends.rewriter),
            ("RERANKER", &mut self.backends.reranker),
            ("SUMMARIZER", &mut self.backends.summarizer),
        ];
        for (prefix, slot) in slots {
            if let Some(url) = lookup(&format!("{prefix}_URL")).filter(|u| !u.is_empty()) {
                slot.get_or_insert_with(EndpointConfig::default).base_url = url;
            }
            if let Some(raw) = lookup(&format!("{prefix}_TIMEOUT_MS")) {
                let ms: u64 = raw
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("{prefix}_TIMEOUT_MS={raw:?} is not an integer")))?;
                if let Some(endpoint) = slot.as_mut() {
                    endpoint.timeout_ms = ms;
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.first_stage_k == 0 || self.eval.first_stage_k == 0 {
            return invalid("first_stage_k must be at least 1".into());
        }
        if self.rerank_depth > self.first_stage_k {
            return invalid(format!("rerank_depth {} exceeds first_stage_k {}", self.rerank_depth, self.first_stage_k));
        }
        if self.eval.rerank_depth > self.eval.first_stage_k {
            return invalid(format!(
                "eval.rerank_depth {} exceeds eval.first_stage_k {}",
                self.eval.rerank_depth, self.eval.first_stage_k
            ));
        }
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.generation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let endpoints = [
            (&self.backends.rewriter, Capability::Rewrite),
            (&self.backends.reranker, Capability::Rerank),
            (&self.backends.summarizer, Capability::Summarize),
        ];
        for (slot, capability) in endpoints {
            if let Some(e) = slot {
                e.endpoint(capability).validate().map_err(ConfigError::Invalid)?;
            }
        }
        Ok(())
    }
}
