use serde::{Deserialize, Serialize};

use super::JudgmentSet;
use crate::retrieval::ScoredList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^rel - 1`
    #[default]
    Exponential,
    /// `rel`
    Linear,
}

impl Gain {
    fn of(self, grade: u8) -> f64 {
        match self {
            Self::Exponential => f64::from((1u32 << grade) - 1),
            Self::Linear => f64::from(grade),
        }
    }
}

fn grades<'a>(run: &'a ScoredList, judgments: &'a JudgmentSet) -> impl Iterator<Item = u8> + 'a {
    run.entries
        .iter()
        .map(move |e| judgments.grade(&run.turn_id, &e.passage_id))
}

/// Relevant entries among the first `k`, over `k`.
pub fn precision_at_k(run: &ScoredList, judgments: &JudgmentSet, k: usize, rel_threshold: u8) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = grades(run, judgments).take(k).filter(|&g| g >= rel_threshold).count();
    hits as f64 / k as f64
}

/// Relevant retrieved over relevant judged; 0 when nothing is relevant.
pub fn recall(run: &ScoredList, judgments: &JudgmentSet, rel_threshold: u8) -> f64 {
    let total = judgments.relevant_count(&run.turn_id, rel_threshold);
    if total == 0 {
        return 0.0;
    }
    let hits = grades(run, judgments).filter(|&g| g >= rel_threshold).count();
    hits as f64 / total as f64
}

pub fn average_precision(run: &ScoredList, judgments: &JudgmentSet, rel_threshold: u8) -> f64 {
    let total = judgments.relevant_count(&run.turn_id, rel_threshold);
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, grade) in grades(run, judgments).enumerate() {
        if grade >= rel_threshold {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

pub fn reciprocal_rank(run: &ScoredList, judgments: &JudgmentSet, rel_threshold: u8) -> f64 {
    grades(run, judgments)
        .position(|g| g >= rel_threshold)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

fn dcg(grades: impl Iterator<Item = u8>, gain: Gain) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| gain.of(g) / libm::log2((i + 2) as f64))
        .sum()
}

/// DCG@k over the ideal DCG@k of all judged grades for the turn.
pub fn ndcg_at_k(run: &ScoredList, judgments: &JudgmentSet, k: usize, gain: Gain) -> f64 {
    let mut ideal: alloc::vec::Vec<u8> = judgments
        .turn(&run.turn_id)
        .map(|t| t.values().copied().collect())
        .unwrap_or_default();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k), gain);
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(grades(run, judgments).take(k), gain) / idcg
}
