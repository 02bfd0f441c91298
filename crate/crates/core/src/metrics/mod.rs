//! Evaluation: ranked-list metrics over graded judgments, text-overlap
//! metrics for rewrites and answers, and TREC qrels/run formats.

mod ranking;
mod text;
pub mod trec;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ranking::{average_precision, ndcg_at_k, precision_at_k, recall, reciprocal_rank, Gain};
pub use text::{bleu4, lcs_length, meteor_lite, rouge_l};

use crate::retrieval::ScoredList;

pub const MAX_GRADE: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no rewrite pairs to score")]
    EmptyCorpus,
    #[error("rewrite pair {0:?} has no references")]
    NoReferences(String),
    #[error("grade {grade} for ({turn_id}, {passage_id}) outside 0..=4")]
    GradeOutOfRange { turn_id: String, passage_id: String, grade: i64 },
}

/// Graded relevance judgments keyed by turn, then passage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JudgmentSet {
    turns: BTreeMap<String, BTreeMap<String, u8>>,
}

impl JudgmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, turn_id: &str, passage_id: &str, grade: i64) -> Result<(), MetricError> {
        if !(0..=i64::from(MAX_GRADE)).contains(&grade) {
            return Err(MetricError::GradeOutOfRange {
                turn_id: turn_id.to_string(),
                passage_id: passage_id.to_string(),
                grade,
            });
        }
        self.turns
            .entry(turn_id.to_string())
            .or_default()
            .insert(passage_id.to_string(), grade as u8);
        Ok(())
    }

    /// Grade of a pair; unjudged pairs count as 0.
    pub fn grade(&self, turn_id: &str, passage_id: &str) -> u8 {
        self.turns
            .get(turn_id)
            .and_then(|t| t.get(passage_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn turn(&self, turn_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.turns.get(turn_id)
    }

    pub fn turn_ids(&self) -> impl Iterator<Item = &str> {
        self.turns.keys().map(String::as_str)
    }

    pub fn relevant_count(&self, turn_id: &str, threshold: u8) -> usize {
        self.turn(turn_id)
            .map_or(0, |t| t.values().filter(|&&g| g >= threshold).count())
    }

    /// Passage ids judged at least `min_grade`, in id order.
    pub fn passages_at_least(&self, turn_id: &str, min_grade: u8) -> Vec<&str> {
        self.turn(turn_id).map_or_else(Vec::new, |t| {
            t.iter()
                .filter(|(_, &g)| g >= min_grade)
                .map(|(id, _)| id.as_str())
                .collect()
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u8)> {
        self.turns
            .iter()
            .flat_map(|(t, ps)| ps.iter().map(move |(p, &g)| (t.as_str(), p.as_str(), g)))
    }

    pub fn len(&self) -> usize {
        self.turns.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewritePair {
    pub turn_id: String,
    pub hypothesis: String,
    pub references: Vec<String>,
}

/// Per-turn metric values plus their arithmetic means.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    /// Column order for exports.
    pub metric_names: Vec<String>,
    pub per_turn: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregate: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn from_per_turn(metric_names: Vec<String>, per_turn: BTreeMap<String, BTreeMap<String, f64>>) -> Self {
        let aggregate = metric_names
            .iter()
            .map(|name| {
                let values: Vec<f64> = per_turn.values().filter_map(|m| m.get(name).copied()).collect();
                let mean = if values.is_empty() {
                    0.0
                } else {
                    values.iter().sum::<f64>() / values.len() as f64
                };
                (name.clone(), mean)
            })
            .collect();
        Self {
            metric_names,
            per_turn,
            aggregate,
        }
    }

    /// Tab-separated table: one row per turn, then an `all` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("turn_id");
        for name in &self.metric_names {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        let rows = self
            .per_turn
            .iter()
            .map(|(turn, values)| (turn.as_str(), values))
            .chain(core::iter::once(("all", &self.aggregate)));
        for (turn, values) in rows {
            out.push_str(turn);
            for name in &self.metric_names {
                let _ = write!(out, "\t{:.6}", values.get(name).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalEvalConfig {
    /// Minimum grade counted as relevant for Recall, P@k, MAP and MRR.
    pub rel_threshold: u8,
    pub precision_k: usize,
    pub ndcg_k: usize,
    pub gain: Gain,
    /// Cutoff for Recall and MAP.
    pub depth: usize,
}

impl Default for RetrievalEvalConfig {
    fn default() -> Self {
        Self {
            rel_threshold: 2,
            precision_k: 3,
            ndcg_k: 3,
            gain: Gain::Exponential,
            depth: 1000,
        }
    }
}

impl RetrievalEvalConfig {
    pub fn metric_names(&self) -> Vec<String> {
        alloc::vec![
            String::from("Recall"),
            format!("P@{}", self.precision_k),
            String::from("MAP"),
            String::from("MRR"),
            format!("nDCG@{}", self.ndcg_k),
        ]
    }
}

/// Scores every judged turn that has at least one relevant passage. Turns
/// without a run are scored as empty runs; runs for unjudged turns are ignored.
pub fn evaluate_runs(runs: &[ScoredList], judgments: &JudgmentSet, config: &RetrievalEvalConfig) -> MetricReport {
    let by_turn: BTreeMap<&str, &ScoredList> = runs.iter().map(|r| (r.turn_id.as_str(), r)).collect();
    let names = config.metric_names();
    let mut per_turn = BTreeMap::new();
    for turn in judgments.turn_ids() {
        if judgments.relevant_count(turn, config.rel_threshold) == 0 {
            continue;
        }
        let empty = ScoredList {
            turn_id: turn.to_string(),
            entries: Vec::new(),
        };
        let run = by_turn.get(turn).copied().unwrap_or(&empty);
        let mut depth_cut = run.clone();
        depth_cut.truncate(config.depth);
        let values = [
            recall(&depth_cut, judgments, config.rel_threshold),
            precision_at_k(run, judgments, config.precision_k, config.rel_threshold),
            average_precision(&depth_cut, judgments, config.rel_threshold),
            reciprocal_rank(run, judgments, config.rel_threshold),
            ndcg_at_k(run, judgments, config.ndcg_k, config.gain),
        ];
        per_turn.insert(turn.to_string(), names.iter().cloned().zip(values).collect());
    }
    MetricReport::from_per_turn(names, per_turn)
}
