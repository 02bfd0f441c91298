//! One conversational turn: rewrite, first-stage search, re-rank, answer.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use convsearch_core::answer::{build_summarizer_input, generate_answer, AnswerError};
use convsearch_core::backend::Unconfigured;
use convsearch_core::context::{rewrite, ContextError, SessionError};
use convsearch_core::rerank::{rerank, RerankError, RerankOptions};
use convsearch_core::retrieval::{search, RetrievalError};
use convsearch_core::{
    AnswerMode, ConversationSession, ConversationTurn, GeneratedAnswer, GenerationParams, Index, PassageSource,
    RewriterBackend, ScoredList, ScorerBackend, SummarizerBackend,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::gateway::{Capability, HttpBackend};

pub const NO_RESULT_ANSWER: &str = "I could not find an answer to that.";
/// Ranked entries that carry passage text in a [`TurnResult`].
pub const TEXT_ATTACHED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradedFlag {
    RewriteFallback,
    RerankFallback,
    SummaryFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub passage_id: String,
    pub score: f64,
    pub rank: usize,
    pub source: PassageSource,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub turn_number: usize,
    pub raw_query: String,
    pub rewritten_query: String,
    pub degraded_flags: BTreeSet<DegradedFlag>,
    pub ranked: Vec<RankedPassage>,
    pub answer: GeneratedAnswer,
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("rewrite failed: {0}")]
    Rewrite(#[from] ContextError),
    #[error("retrieval failed: {0}")]
    Retrieval(RetrievalError),
    #[error("re-ranking failed: {0}")]
    Rerank(#[from] RerankError),
    #[error("answer generation failed: {0}")]
    Answer(#[from] AnswerError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// A ranked list plus whether the scorer fallback fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub list: ScoredList,
    pub rerank_degraded: bool,
}

type Rewriter = Box<dyn RewriterBackend + Send + Sync>;
type Scorer = Box<dyn ScorerBackend + Send + Sync>;
type Summarizer = Box<dyn SummarizerBackend + Send + Sync>;

pub struct Pipeline {
    index: Arc<Index>,
    config: PipelineConfig,
    rewriter: Rewriter,
    scorer: Scorer,
    summarizer: Summarizer,
}

impl Pipeline {
    /// Uses the HTTP endpoints in `config`; unconfigured stages always fail
    /// over to their fallback (or error when fallback is off).
    pub fn new(index: Arc<Index>, config: PipelineConfig) -> Self {
        let b = &config.backends;
        let rewriter: Rewriter = match &b.rewriter {
            Some(e) => Box::new(HttpBackend::new(e.endpoint(Capability::Rewrite))),
            None => Box::new(Unconfigured),
        };
        let scorer: Scorer = match &b.reranker {
            Some(e) => Box::new(HttpBackend::new(e.endpoint(Capability::Rerank))),
            None => Box::new(Unconfigured),
        };
        let summarizer: Summarizer = match &b.summarizer {
            Some(e) => Box::new(HttpBackend::new(e.endpoint(Capability::Summarize))),
            None => Box::new(Unconfigured),
        };
        Self::with_backends(index, config, rewriter, scorer, summarizer)
    }

    pub fn with_backends(index: Arc<Index>, config: PipelineConfig, rewriter: Rewriter, scorer: Scorer, summarizer: Summarizer) -> Self {
        Self {
            index,
            config,
            rewriter,
            scorer,
            summarizer,
        }
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn rewriter(&self) -> &dyn RewriterBackend {
        &*self.rewriter
    }

    pub fn summarizer(&self) -> &dyn SummarizerBackend {
        &*self.summarizer
    }

    pub fn summarizer_configured(&self) -> bool {
        self.config.backends.summarizer.is_some()
    }

    fn text_of(&self, id: &str) -> Option<&str> {
        self.index.passage_by_id(id).map(|p| p.text.as_str())
    }

    /// First-stage search to depth `k`, then re-ranking of the top
    /// `rerank_depth` when given.
    pub fn retrieve(&self, turn_id: &str, query: &str, k: usize, rerank_depth: Option<usize>) -> Result<Ranking, PipelineError> {
        let first = search(&self.index, turn_id, query, &self.config.retrieval, k).map_err(PipelineError::Retrieval)?;
        let Some(depth) = rerank_depth else {
            return Ok(Ranking {
                list: first,
                rerank_degraded: false,
            });
        };
        let options = RerankOptions {
            depth,
            batch_size: self.config.rerank_batch_size,
            fallback: self.config.fallback.rerank,
        };
        let outcome = rerank(query, &first, |id| self.text_of(id), &*self.scorer, self.index.analyzer(), &options)?;
        Ok(Ranking {
            list: outcome.list,
            rerank_degraded: outcome.degraded,
        })
    }

    /// Abstractive answer over the top passages, falling back to the
    /// extractive baseline per policy.
    pub fn answer(&self, ranked: &ScoredList, params: &GenerationParams) -> Result<GeneratedAnswer, PipelineError> {
        let n = params.top_n_passages;
        let input = build_summarizer_input(ranked, |id| self.text_of(id), n);
        let ids = ranked.ids().take(n).map(str::to_string).collect();
        Ok(generate_answer(&input, params, &*self.summarizer, self.config.fallback.summary, ids)?)
    }

    fn attach(&self, list: &ScoredList) -> Vec<RankedPassage> {
        list.entries
            .iter()
            .map(|e| {
                let passage = self.index.passage_by_id(&e.passage_id);
                RankedPassage {
                    passage_id: e.passage_id.clone(),
                    score: e.score,
                    rank: e.rank,
                    source: passage.map_or_else(|| PassageSource::from_id(&e.passage_id), |p| p.source),
                    text: (e.rank <= TEXT_ATTACHED).then(|| passage.map(|p| p.text.clone())).flatten(),
                }
            })
            .collect()
    }

    /// Runs all four stages for `raw_query` and appends the turn to `session`.
    pub fn process_turn(&self, session: &mut ConversationSession, raw_query: &str) -> Result<TurnResult, PipelineError> {
        let raw_query = raw_query.trim();
        if raw_query.is_empty() {
            return Err(PipelineError::EmptyQuery);
        }
        let started = Instant::now();
        let mut timings = BTreeMap::new();
        let mut flags = BTreeSet::new();
        let turn_number = session.next_turn_number();
        let turn_id = format!("{}_{}", session.session_id, turn_number);

        let stage = Instant::now();
        let rewritten = rewrite(session, raw_query, &*self.rewriter, self.config.fallback.rewrite)?;
        timings.insert("rewrite".to_string(), ms(stage));
        if rewritten.degraded {
            flags.insert(DegradedFlag::RewriteFallback);
        }

        let stage = Instant::now();
        let depth = self.config.rerank.then_some(self.config.rerank_depth);
        let ranking = match self.retrieve(&turn_id, &rewritten.text, self.config.first_stage_k, depth) {
            Ok(r) if !r.list.is_empty() => Some(r),
            Ok(_) | Err(PipelineError::Retrieval(RetrievalError::EmptyQueryAfterAnalysis)) => None,
            Err(e) => return Err(e),
        };
        timings.insert("retrieval".to_string(), ms(stage));

        let stage = Instant::now();
        let (ranked, answer, top_passage) = match ranking {
            None => (
                Vec::new(),
                GeneratedAnswer {
                    text: NO_RESULT_ANSWER.to_string(),
                    mode: AnswerMode::ExtractiveBaseline,
                    source_passage_ids: Vec::new(),
                    truncated: false,
                    degraded: false,
                },
                None,
            ),
            Some(r) => {
                if r.rerank_degraded {
                    flags.insert(DegradedFlag::RerankFallback);
                }
                let answer = self.answer(&r.list, &self.config.generation)?;
                if answer.degraded {
                    flags.insert(DegradedFlag::SummaryFallback);
                }
                let top = r.list.entries.first().and_then(|e| self.index.passage_by_id(&e.passage_id)).cloned();
                (self.attach(&r.list), answer, top)
            }
        };
        timings.insert("generation".to_string(), ms(stage));
        timings.insert("total".to_string(), ms(started));

        session.append(ConversationTurn {
            turn_number,
            raw_query: raw_query.to_string(),
            rewritten_query: Some(rewritten.text.clone()),
            top_passage,
            answer: Some(answer.text.clone()),
        })?;
        Ok(TurnResult {
            turn_number,
            raw_query: raw_query.to_string(),
            rewritten_query: rewritten.text,
            degraded_flags: flags,
            ranked,
            answer,
            timings_ms: timings,
        })
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}
