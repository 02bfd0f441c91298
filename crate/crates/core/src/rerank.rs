//! Second-stage re-ranking by relevance probability.
//!
//! Each candidate is rendered as `[CLS] q [SEP] p` with the passage tail cut
//! to fit the 512-token budget. The top `depth` candidates are re-ordered by
//! probability; the rest keep their first-stage order below them, so the set
//! of returned ids never changes.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Analyzer;
use crate::backend::{GatewayError, ScorerBackend};
use crate::context::estimate_tokens;
use crate::retrieval::{rank_order, ScoredList};

pub const RERANK_TOKEN_BUDGET: usize = 512;
pub const DEFAULT_BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankInput {
    pub query: String,
    /// The passage as sent, after tail truncation.
    pub passage_text: String,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScore {
    pub passage_id: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RerankError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("query alone needs {needed} tokens, over the {budget}-token budget")]
    QueryTooLong { needed: usize, budget: usize },
    #[error("scorer unavailable and no fallback configured: {0}")]
    ScorerUnavailable(GatewayError),
}

fn render(query: &str, passage: &str) -> String {
    format!("[CLS] {query} [SEP] {passage}")
}

/// Byte offset just past the `n`-th whitespace-separated word of `text`.
fn prefix_words(text: &str, n: usize) -> &str {
    let mut seen = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_word {
                seen += 1;
                if seen == n {
                    return &text[..i];
                }
            }
            in_word = false;
        } else {
            in_word = true;
        }
    }
    text
}

pub fn build_rerank_input(query: &str, passage: &str) -> Result<RerankInput, RerankError> {
    build_rerank_input_with_budget(query, passage, RERANK_TOKEN_BUDGET)
}

pub fn build_rerank_input_with_budget(query: &str, passage: &str, budget: usize) -> Result<RerankInput, RerankError> {
    if query.trim().is_empty() {
        return Err(RerankError::EmptyQuery);
    }
    let needed = estimate_tokens(&render(query, ""));
    if needed > budget {
        return Err(RerankError::QueryTooLong { needed, budget });
    }
    let mut passage_text = passage;
    if estimate_tokens(&render(query, passage)) > budget {
        let mut keep = passage.split_whitespace().count();
        while keep > 0 && estimate_tokens(&render(query, prefix_words(passage, keep))) > budget {
            keep -= 1;
        }
        passage_text = if keep == 0 { "" } else { prefix_words(passage, keep) };
    }
    Ok(RerankInput {
        query: query.to_string(),
        passage_text: passage_text.to_string(),
        rendered: render(query, passage_text),
    })
}

/// Fraction of distinct analyzed query terms present in the passage.
pub fn fallback_probability(analyzer: &Analyzer, input: &RerankInput) -> f64 {
    let query: BTreeSet<String> = analyzer.analyze(&input.query).into_iter().collect();
    if query.is_empty() {
        return 0.0;
    }
    let passage: BTreeSet<String> = analyzer.analyze(&input.passage_text).into_iter().collect();
    let overlap = query.intersection(&passage).count();
    (overlap as f64 / query.len() as f64).clamp(0.0, 1.0)
}

pub fn fallback_scorer(analyzer: &Analyzer, passage_id: &str, input: &RerankInput) -> RelevanceScore {
    RelevanceScore {
        passage_id: passage_id.to_string(),
        probability: fallback_probability(analyzer, input),
    }
}

/// Deterministic term-overlap scorer usable wherever a served model is expected.
#[derive(Debug, Clone, Default)]
pub struct FallbackScorer {
    pub analyzer: Analyzer,
}

impl ScorerBackend for FallbackScorer {
    fn score(&self, batch: &[RerankInput]) -> Result<Vec<f64>, GatewayError> {
        Ok(batch.iter().map(|input| fallback_probability(&self.analyzer, input)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankOptions {
    pub depth: usize,
    pub batch_size: usize,
    /// Score failed batches with [`fallback_probability`] instead of skipping them.
    pub fallback: bool,
}

impl Default for RerankOptions {
    fn default() -> Self {
        Self {
            depth: 50,
            batch_size: DEFAULT_BATCH_SIZE,
            fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutcome {
    pub list: ScoredList,
    pub scores: Vec<RelevanceScore>,
    /// Set when any pair was scored by the fallback or skipped.
    pub degraded: bool,
}

fn check_scores(scores: &[f64], expected: usize) -> Result<(), GatewayError> {
    if scores.len() != expected {
        return Err(GatewayError::contract(format!(
            "expected {expected} scores, got {}",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(GatewayError::contract(format!("score {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Re-orders the top `options.depth` candidates by relevance probability.
///
/// A pair that could not be scored keeps its first-stage slot inside the
/// re-ranked block. `passage_text` resolves ids to passage text; unknown ids
/// are scored against an empty passage.
pub fn rerank<'p>(
    query: &str,
    candidates: &ScoredList,
    passage_text: impl Fn(&str) -> Option<&'p str>,
    scorer: &dyn ScorerBackend,
    analyzer: &Analyzer,
    options: &RerankOptions,
) -> Result<RerankOutcome, RerankError> {
    let depth = options.depth.min(candidates.len());
    if depth == 0 {
        return Ok(RerankOutcome {
            list: candidates.clone(),
            scores: Vec::new(),
            degraded: false,
        });
    }
    let block = &candidates.entries[..depth];
    let inputs = block
        .iter()
        .map(|e| build_rerank_input(query, passage_text(&e.passage_id).unwrap_or("")))
        .collect::<Result<Vec<_>, _>>()?;

    let mut probabilities: Vec<Option<f64>> = Vec::with_capacity(depth);
    let mut degraded = false;
    let mut last_error = None;
    for chunk in inputs.chunks(options.batch_size.max(1)) {
        let result = scorer.score(chunk).and_then(|s| check_scores(&s, chunk.len()).map(|()| s));
        match result {
            Ok(scores) => probabilities.extend(scores.into_iter().map(Some)),
            Err(e) => {
                degraded = true;
                if options.fallback {
                    probabilities.extend(chunk.iter().map(|i| Some(fallback_probability(analyzer, i))));
                } else {
                    probabilities.extend(chunk.iter().map(|_| None));
                }
                last_error = Some(e);
            }
        }
    }
    if probabilities.iter().all(Option::is_none) {
        return Err(RerankError::ScorerUnavailable(last_error.expect("a batch failed")));
    }

    let mut scored: Vec<(String, f64)> = block
        .iter()
        .zip(&probabilities)
        .filter_map(|(e, p)| p.map(|p| (e.passage_id.clone(), p)))
        .collect();
    scored.sort_by(|a, b| rank_order((a.1, &a.0), (b.1, &b.0)));
    let scores: Vec<RelevanceScore> = scored
        .iter()
        .map(|(id, p)| RelevanceScore {
            passage_id: id.clone(),
            probability: *p,
        })
        .collect();

    let mut sorted = scored.into_iter();
    let mut ordered: Vec<(String, f64)> = Vec::with_capacity(candidates.len());
    for (entry, p) in block.iter().zip(&probabilities) {
        match p {
            Some(_) => ordered.push(sorted.next().expect("one sorted entry per scored slot")),
            None => ordered.push((entry.passage_id.clone(), entry.score)),
        }
    }
    ordered.extend(candidates.entries[depth..].iter().map(|e| (e.passage_id.clone(), e.score)));

    Ok(RerankOutcome {
        list: ScoredList::from_ordered(candidates.turn_id.clone(), ordered),
        scores,
        degraded,
    })
}
