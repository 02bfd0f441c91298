//! First-stage ranking: BM25 and query-likelihood language models with
//! Dirichlet or Jelinek-Mercer smoothing.
//!
//! BM25 uses `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`, which stays
//! non-negative. Query terms that never occur in the collection contribute
//! nothing to LM scores instead of driving them to minus infinity.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{DocOrdinal, Index};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bm25,
    #[default]
    Lmd,
    Lmjm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalModel {
    pub kind: ModelKind,
    pub k1: f64,
    pub b: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl Default for RetrievalModel {
    fn default() -> Self {
        Self {
            kind: ModelKind::Lmd,
            k1: 0.9,
            b: 0.4,
            mu: 1000.0,
            lambda: 0.1,
        }
    }
}

impl RetrievalModel {
    pub fn bm25() -> Self {
        Self {
            kind: ModelKind::Bm25,
            ..Self::default()
        }
    }

    pub fn lmd() -> Self {
        Self::default()
    }

    pub fn lmjm() -> Self {
        Self {
            kind: ModelKind::Lmjm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let ok = match self.kind {
            ModelKind::Bm25 => self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b),
            ModelKind::Lmd => self.mu > 0.0,
            ModelKind::Lmjm => self.lambda > 0.0 && self.lambda < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(RetrievalError::InvalidModel(*self))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("query has no searchable terms after analysis")]
    EmptyQueryAfterAnalysis,
    #[error("k must be at least 1")]
    InvalidDepth,
    #[error("invalid retrieval model parameters: {0:?}")]
    InvalidModel(RetrievalModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub passage_id: String,
    pub score: f64,
    pub rank: usize,
}

/// A ranked list for one turn. Rank order is authoritative.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredList {
    pub turn_id: String,
    pub entries: Vec<ScoredEntry>,
}

/// Descending score, then ascending passage id.
pub fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl ScoredList {
    /// Sorts by score descending with ties broken by passage id, then assigns ranks.
    pub fn from_scores(turn_id: impl Into<String>, mut scores: Vec<(String, f64)>) -> Self {
        scores.sort_by(|a, b| rank_order((a.1, &a.0), (b.1, &b.0)));
        Self::from_ordered(turn_id, scores)
    }

    /// Keeps the given order and assigns contiguous ranks from 1.
    pub fn from_ordered(turn_id: impl Into<String>, scores: Vec<(String, f64)>) -> Self {
        Self {
            turn_id: turn_id.into(),
            entries: scores
                .into_iter()
                .enumerate()
                .map(|(i, (passage_id, score))| ScoredEntry {
                    passage_id,
                    score,
                    rank: i + 1,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.passage_id.as_str())
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

fn bm25_term(idf: f64, tf: f64, doc_len: f64, avg_len: f64, model: &RetrievalModel) -> f64 {
    idf * tf * (model.k1 + 1.0) / (tf + model.k1 * (1.0 - model.b + model.b * doc_len / avg_len))
}

fn bm25_idf(index: &Index, term: &str) -> f64 {
    let n = index.doc_count() as f64;
    let df = index.document_frequency(term) as f64;
    libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
}

/// `ln p(t|d)` under the model's smoothing.
fn lm_term(tf: f64, doc_len: f64, cf: f64, collection_len: f64, model: &RetrievalModel) -> f64 {
    let background = cf / collection_len;
    let p = match model.kind {
        ModelKind::Lmjm => {
            let ml = if doc_len > 0.0 { tf / doc_len } else { 0.0 };
            (1.0 - model.lambda) * ml + model.lambda * background
        }
        _ => (tf + model.mu * background) / (doc_len + model.mu),
    };
    libm::log(p)
}

/// BM25 score of one document; 0 when it shares no term with the query.
pub fn score_bm25(query_terms: &[String], doc: DocOrdinal, index: &Index, model: &RetrievalModel) -> f64 {
    let avg_len = index.stats().avg_doc_length();
    let doc_len = f64::from(index.doc_length(doc));
    query_terms
        .iter()
        .map(|term| {
            let tf = index.term_frequency(term, doc);
            if tf == 0 {
                0.0
            } else {
                bm25_term(bm25_idf(index, term), f64::from(tf), doc_len, avg_len, model)
            }
        })
        .sum()
}

/// Query log-likelihood `sum_t c(t,q) ln p(t|d)`, skipping terms unseen in the collection.
pub fn score_lm(query_terms: &[String], doc: DocOrdinal, index: &Index, model: &RetrievalModel) -> f64 {
    let collection_len = index.stats().total_tokens as f64;
    let doc_len = f64::from(index.doc_length(doc));
    query_terms
        .iter()
        .filter_map(|term| {
            let cf = index.collection_frequency(term);
            (cf > 0).then(|| {
                let tf = f64::from(index.term_frequency(term, doc));
                lm_term(tf, doc_len, cf as f64, collection_len, model)
            })
        })
        .sum()
}

pub fn score(query_terms: &[String], doc: DocOrdinal, index: &Index, model: &RetrievalModel) -> f64 {
    match model.kind {
        ModelKind::Bm25 => score_bm25(query_terms, doc, index, model),
        ModelKind::Lmd | ModelKind::Lmjm => score_lm(query_terms, doc, index, model),
    }
}

struct Candidate<'a> {
    score: f64,
    id: &'a str,
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate<'_> {
    /// Greater means ranked earlier.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order((other.score, other.id), (self.score, self.id))
    }
}

/// Keeps the best `k` of `scores` using a bounded heap.
fn top_k<'a>(scores: impl Iterator<Item = (f64, &'a str)>, k: usize) -> Vec<(String, f64)> {
    let mut heap: BinaryHeap<Reverse<Candidate<'a>>> = BinaryHeap::with_capacity(k + 1);
    for (score, id) in scores {
        heap.push(Reverse(Candidate { score, id }));
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut best: Vec<Candidate<'a>> = heap.into_iter().map(|Reverse(c)| c).collect();
    best.sort_by(|a, b| b.cmp(a));
    best.into_iter().map(|c| (String::from(c.id), c.score)).collect()
}

/// Top-`k` passages for `query`, analyzed with the index's analyzer.
pub fn search(
    index: &Index,
    turn_id: &str,
    query: &str,
    model: &RetrievalModel,
    k: usize,
) -> Result<ScoredList, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidDepth);
    }
    model.validate()?;
    let terms = index.analyzer().analyze(query);
    search_terms(index, turn_id, &terms, model, k)
}

pub fn search_terms(
    index: &Index,
    turn_id: &str,
    terms: &[String],
    model: &RetrievalModel,
    k: usize,
) -> Result<ScoredList, RetrievalError> {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for term in terms {
        if index.collection_frequency(term) > 0 {
            *counts.entry(term.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(RetrievalError::EmptyQueryAfterAnalysis);
    }

    let n = index.doc_count();
    let stats = index.stats();
    let scores: Vec<f64> = match model.kind {
        ModelKind::Bm25 => {
            // NaN marks documents with no query term.
            let mut acc = vec![f64::NAN; n];
            let avg_len = stats.avg_doc_length();
            for (&term, &count) in &counts {
                let idf = bm25_idf(index, term);
                for &(doc, tf) in index.postings(term).expect("term seen").entries {
                    let doc_len = f64::from(stats.doc_lengths[doc as usize]);
                    let contribution = f64::from(count) * bm25_term(idf, f64::from(tf), doc_len, avg_len, model);
                    let slot = &mut acc[doc as usize];
                    *slot = if slot.is_nan() { contribution } else { *slot + contribution };
                }
            }
            acc
        }
        ModelKind::Lmd | ModelKind::Lmjm => {
            let collection_len = stats.total_tokens as f64;
            let mut acc = vec![0.0f64; n];
            let mut tfs = vec![0u32; n];
            for (&term, &count) in &counts {
                tfs.iter_mut().for_each(|tf| *tf = 0);
                for &(doc, tf) in index.postings(term).expect("term seen").entries {
                    tfs[doc as usize] = tf;
                }
                let cf = index.collection_frequency(term) as f64;
                for (doc, slot) in acc.iter_mut().enumerate() {
                    let doc_len = f64::from(stats.doc_lengths[doc]);
                    *slot += f64::from(count) * lm_term(f64::from(tfs[doc]), doc_len, cf, collection_len, model);
                }
            }
            acc
        }
    };

    let candidates = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_nan())
        .map(|(doc, &s)| (s, index.passage(doc as DocOrdinal).id.as_str()));
    Ok(ScoredList::from_ordered(turn_id, top_k(candidates, k)))
}
