//! HTTP clients for the served rewriter, scorer and summarizer.
//!
//! Every call is a JSON POST. Unreachable hosts, timeouts and 5xx answers are
//! retried with exponential backoff; the models are pure inference so repeated
//! calls are safe.

use std::io;
use std::thread;
use std::time::Duration;

use convsearch_core::backend::{GatewayError, GatewayErrorKind};
use convsearch_core::{GenerationParams, RerankInput, RewritePrompt, RewriterBackend, ScorerBackend, SummarizerBackend};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_BACKOFF_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Rewrite,
    Rerank,
    Summarize,
}

impl Capability {
    pub fn path(self) -> &'static str {
        match self {
            Self::Rewrite => "/rewrite",
            Self::Rerank => "/rerank",
            Self::Summarize => "/summarize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub base_url: String,
    pub capability: Capability,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry delay; doubled on every further retry.
    pub backoff_ms: u64,
    /// Sent as `Authorization: Bearer <token>` when set.
    pub bearer_token: Option<String>,
}

impl BackendEndpoint {
    pub fn new(base_url: impl Into<String>, capability: Capability) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            capability,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_ms: DEFAULT_BACKOFF_MS,
            bearer_token: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_ms == 0 {
            return Err(format!("{}: timeout_ms must be positive", self.base_url));
        }
        if !self.base_url.starts_with("http://") && !self.base_url.starts_with("https://") {
            return Err(format!("{}: base_url must be an http(s) URL", self.base_url));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }

    fn agent(&self) -> ureq::Agent {
        ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build()
    }
}

/// Request and response bodies. Field names are part of the contract.
pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct RewriteRequest {
        pub prompt: String,
        pub max_output_tokens: usize,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct RewriteResponse {
        #[serde(default)]
        pub rewritten: Option<String>,
    }

    /// `rendered` carries the literal `[CLS] q [SEP] p` text; a served model
    /// maps the markers to its own special tokens.
    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct RerankPair {
        pub query: String,
        pub passage: String,
        pub rendered: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct RerankRequest {
        pub pairs: Vec<RerankPair>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct RerankResponse {
        #[serde(default)]
        pub scores: Option<Vec<f64>>,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct SummarizeRequest {
        pub text: String,
        pub num_beams: usize,
        pub no_repeat_ngram: usize,
        pub early_stop_sentences: usize,
        pub min_length_words: usize,
        pub max_length_words: usize,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct SummarizeResponse {
        #[serde(default)]
        pub summary: Option<String>,
    }
}

struct AttemptError {
    error: GatewayError,
    server_side: bool,
}

fn is_timeout(err: &(dyn std::error::Error + 'static)) -> bool {
    let mut current: Option<&(dyn std::error::Error + 'static)> = Some(err);
    while let Some(e) = current {
        if let Some(io) = e.downcast_ref::<io::Error>() {
            if matches!(io.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        current = e.source();
    }
    false
}

fn classify(err: ureq::Error) -> AttemptError {
    match err {
        ureq::Error::Status(code, response) => {
            let body: String = response.into_string().unwrap_or_default().chars().take(200).collect();
            AttemptError {
                error: GatewayError::new(GatewayErrorKind::BadStatus, format!("HTTP {code}: {body}")),
                server_side: code >= 500,
            }
        }
        ureq::Error::Transport(t) => {
            let kind = if is_timeout(&t) {
                GatewayErrorKind::Timeout
            } else {
                GatewayErrorKind::Unreachable
            };
            AttemptError {
                error: GatewayError::new(kind, t.to_string()),
                server_side: false,
            }
        }
    }
}

fn read_body(response: ureq::Response) -> Result<String, AttemptError> {
    response.into_string().map_err(|e| {
        let kind = if is_timeout(&e) {
            GatewayErrorKind::Timeout
        } else {
            GatewayErrorKind::MalformedResponse
        };
        AttemptError {
            error: GatewayError::new(kind, e.to_string()),
            server_side: false,
        }
    })
}

/// Posts `body` with retries and decodes the response.
pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    endpoint: &BackendEndpoint,
    path: &str,
    body: &Req,
) -> Result<Resp, GatewayError> {
    post_with(&endpoint.agent(), endpoint, path, body)
}

fn post_with<Req: Serialize, Resp: DeserializeOwned>(
    agent: &ureq::Agent,
    endpoint: &BackendEndpoint,
    path: &str,
    body: &Req,
) -> Result<Resp, GatewayError> {
    let payload = serde_json::to_string(body).map_err(|e| GatewayError::contract(e.to_string()))?;
    let url = endpoint.url(path);
    let mut attempt = 0;
    loop {
        let mut request = agent.post(&url).set("Content-Type", "application/json");
        if let Some(token) = &endpoint.bearer_token {
            request = request.set("Authorization", &format!("Bearer {token}"));
        }
        let result = request.send_string(&payload).map_err(classify).and_then(read_body);
        let failure = match result {
            Ok(text) => {
                return serde_json::from_str(&text)
                    .map_err(|e| GatewayError::new(GatewayErrorKind::MalformedResponse, e.to_string()));
            }
            Err(f) => f,
        };
        let retry = failure.error.retriable || failure.server_side;
        if !retry || attempt >= endpoint.max_retries {
            return Err(failure.error);
        }
        thread::sleep(Duration::from_millis(endpoint.backoff_ms << attempt));
        attempt += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Health {
    Healthy,
    Unhealthy(String),
}

/// `GET {base_url}/health`; healthy on any 2xx within the timeout.
pub fn health(endpoint: &BackendEndpoint) -> Health {
    match endpoint.agent().get(&endpoint.url("/health")).call() {
        Ok(r) if (200..300).contains(&r.status()) => Health::Healthy,
        Ok(r) => Health::Unhealthy(format!("HTTP {}", r.status())),
        Err(e) => Health::Unhealthy(classify(e).error.to_string()),
    }
}

fn check_capability(endpoint: &BackendEndpoint, wanted: Capability) -> Result<(), GatewayError> {
    if endpoint.capability == wanted {
        Ok(())
    } else {
        Err(GatewayError::contract(format!(
            "endpoint {} serves {:?}, not {wanted:?}",
            endpoint.base_url, endpoint.capability
        )))
    }
}

pub fn call_rewrite(endpoint: &BackendEndpoint, prompt: &RewritePrompt, max_output_tokens: usize) -> Result<String, GatewayError> {
    call_rewrite_with(&endpoint.agent(), endpoint, prompt, max_output_tokens)
}

fn call_rewrite_with(agent: &ureq::Agent, endpoint: &BackendEndpoint, prompt: &RewritePrompt, max_output_tokens: usize) -> Result<String, GatewayError> {
    check_capability(endpoint, Capability::Rewrite)?;
    let request = wire::RewriteRequest {
        prompt: prompt.text.clone(),
        max_output_tokens,
    };
    let response: wire::RewriteResponse = post_with(agent, endpoint, Capability::Rewrite.path(), &request)?;
    match response.rewritten {
        Some(text) if !text.trim().is_empty() => Ok(text),
        Some(_) => Err(GatewayError::contract("empty `rewritten`")),
        None => Err(GatewayError::contract("response lacks `rewritten`")),
    }
}

pub fn call_rerank(endpoint: &BackendEndpoint, batch: &[RerankInput]) -> Result<Vec<f64>, GatewayError> {
    call_rerank_with(&endpoint.agent(), endpoint, batch)
}

fn call_rerank_with(agent: &ureq::Agent, endpoint: &BackendEndpoint, batch: &[RerankInput]) -> Result<Vec<f64>, GatewayError> {
    check_capability(endpoint, Capability::Rerank)?;
    if batch.is_empty() {
        return Err(GatewayError::contract("empty rerank batch"));
    }
    let request = wire::RerankRequest {
        pairs: batch
            .iter()
            .map(|i| wire::RerankPair {
                query: i.query.clone(),
                passage: i.passage_text.clone(),
                rendered: i.rendered.clone(),
            })
            .collect(),
    };
    let response: wire::RerankResponse = post_with(agent, endpoint, Capability::Rerank.path(), &request)?;
    let scores = response.scores.ok_or_else(|| GatewayError::contract("response lacks `scores`"))?;
    if scores.len() != batch.len() {
        return Err(GatewayError::contract(format!("{} scores for {} pairs", scores.len(), batch.len())));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(GatewayError::contract(format!("score {bad} outside [0, 1]")));
    }
    Ok(scores)
}

pub fn call_summarize(endpoint: &BackendEndpoint, input: &str, params: &GenerationParams) -> Result<String, GatewayError> {
    call_summarize_with(&endpoint.agent(), endpoint, input, params)
}

fn call_summarize_with(agent: &ureq::Agent, endpoint: &BackendEndpoint, input: &str, params: &GenerationParams) -> Result<String, GatewayError> {
    check_capability(endpoint, Capability::Summarize)?;
    let request = wire::SummarizeRequest {
        text: input.to_string(),
        num_beams: params.num_beams,
        no_repeat_ngram: params.no_repeat_ngram,
        early_stop_sentences: params.early_stop_sentences,
        min_length_words: params.min_length_words,
        max_length_words: params
            .max_length_words
            .unwrap_or_else(|| convsearch_core::word_count(input)),
    };
    let response: wire::SummarizeResponse = post_with(agent, endpoint, Capability::Summarize.path(), &request)?;
    match response.summary {
        Some(text) if !text.trim().is_empty() => Ok(text),
        Some(_) => Err(GatewayError::contract("empty `summary`")),
        None => Err(GatewayError::contract("response lacks `summary`")),
    }
}

/// A gateway client bound to one endpoint; implements the matching backend
/// trait. Connections are kept alive between calls.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub endpoint: BackendEndpoint,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: BackendEndpoint) -> Self {
        let agent = endpoint.agent();
        Self { endpoint, agent }
    }
}

impl RewriterBackend for HttpBackend {
    fn rewrite(&self, prompt: &RewritePrompt, max_output_tokens: usize) -> Result<String, GatewayError> {
        call_rewrite_with(&self.agent, &self.endpoint, prompt, max_output_tokens)
    }
}

impl ScorerBackend for HttpBackend {
    fn score(&self, batch: &[RerankInput]) -> Result<Vec<f64>, GatewayError> {
        call_rerank_with(&self.agent, &self.endpoint, batch)
    }
}

impl SummarizerBackend for HttpBackend {
    fn summarize(&self, input: &str, params: &GenerationParams) -> Result<String, GatewayError> {
        call_summarize_with(&self.agent, &self.endpoint, input, params)
    }
}
