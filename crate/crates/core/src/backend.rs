//! Traits for the served neural models and the error type shared by every
//! transport that implements them.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::GenerationParams;
use crate::context::RewritePrompt;
use crate::rerank::RerankInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayErrorKind {
    Unreachable,
    Timeout,
    BadStatus,
    MalformedResponse,
    ContractViolation,
}

impl GatewayErrorKind {
    pub fn is_retriable(self) -> bool {
        matches!(self, Self::Unreachable | Self::Timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?}: {detail}")]
pub struct GatewayError {
    pub kind: GatewayErrorKind,
    pub detail: String,
    pub retriable: bool,
}

impl GatewayError {
    pub fn new(kind: GatewayErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
            retriable: kind.is_retriable(),
        }
    }

    pub fn contract(detail: impl Into<String>) -> Self {
        Self::new(GatewayErrorKind::ContractViolation, detail)
    }

    pub fn unreachable(detail: impl Into<String>) -> Self {
        Self::new(GatewayErrorKind::Unreachable, detail)
    }
}

pub trait RewriterBackend {
    fn rewrite(&self, prompt: &RewritePrompt, max_output_tokens: usize) -> Result<String, GatewayError>;
}

pub trait ScorerBackend {
    /// Relevance probabilities, positionally aligned with `batch`.
    fn score(&self, batch: &[RerankInput]) -> Result<Vec<f64>, GatewayError>;
}

pub trait SummarizerBackend {
    /// `params.max_length_words` is always resolved by the caller.
    fn summarize(&self, input: &str, params: &GenerationParams) -> Result<String, GatewayError>;
}

/// A backend slot with nothing configured; every call reports `Unreachable`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unconfigured;

impl RewriterBackend for Unconfigured {
    fn rewrite(&self, _: &RewritePrompt, _: usize) -> Result<String, GatewayError> {
        Err(GatewayError::unreachable("no rewriter configured"))
    }
}

impl ScorerBackend for Unconfigured {
    fn score(&self, _: &[RerankInput]) -> Result<Vec<f64>, GatewayError> {
        Err(GatewayError::unreachable("no scorer configured"))
    }
}

impl SummarizerBackend for Unconfigured {
    fn summarize(&self, _: &str, _: &GenerationParams) -> Result<String, GatewayError> {
        Err(GatewayError::unreachable("no summarizer configured"))
    }
}

impl<T: RewriterBackend + ?Sized> RewriterBackend for &T {
    fn rewrite(&self, prompt: &RewritePrompt, max_output_tokens: usize) -> Result<String, GatewayError> {
        (**self).rewrite(prompt, max_output_tokens)
    }
}

impl<T: ScorerBackend + ?Sized> ScorerBackend for &T {
    fn score(&self, batch: &[RerankInput]) -> Result<Vec<f64>, GatewayError> {
        (**self).score(batch)
    }
}

impl<T: SummarizerBackend + ?Sized> SummarizerBackend for &T {
    fn summarize(&self, input: &str, params: &GenerationParams) -> Result<String, GatewayError> {
        (**self).summarize(input, params)
    }
}
