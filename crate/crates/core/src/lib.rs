//! Core algorithms for an open-domain conversational search assistant.
//!
//! Everything in this crate is pure computation over owned data and needs only
//! `alloc`: text analysis, the inverted index and its binary codec, first-stage
//! scoring models, conversational prompt construction, re-ranking, answer
//! construction, and the evaluation metrics. IO, networking and the CLI live in
//! the `convsearch` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod answer;
pub mod backend;
pub mod context;
pub mod index;
pub mod metrics;
pub mod porter;
pub mod rerank;
pub mod retrieval;

pub use analysis::{Analyzer, AnalyzerConfig, StemmerKind, Token};
pub use answer::{AnswerMode, GeneratedAnswer, GenerationParams};
pub use backend::{GatewayError, GatewayErrorKind, RewriterBackend, ScorerBackend, SummarizerBackend};
pub use context::{ConversationSession, ConversationTurn, RewritePrompt};
pub use index::{Index, IndexBuilder, IndexError, IndexStats, Passage, PassageSource, PostingsList};
pub use metrics::{JudgmentSet, MetricReport, RewritePair};
pub use rerank::{RelevanceScore, RerankInput};
pub use retrieval::{RetrievalModel, ScoredEntry, ScoredList};

/// Number of whitespace-separated words in `text`.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
