//! Whitespace-separated TREC formats.
//!
//! qrels: `turn_id 0 passage_id grade`
//! run:   `turn_id Q0 passage_id rank score tag`

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use super::JudgmentSet;
use crate::retrieval::{ScoredEntry, ScoredList};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}: {content:?}")]
pub struct TrecParseError {
    pub line: usize,
    pub reason: String,
    pub content: String,
}

fn err(line: usize, reason: &str, content: &str) -> TrecParseError {
    TrecParseError {
        line,
        reason: reason.to_string(),
        content: content.chars().take(80).collect(),
    }
}

pub fn parse_qrels(text: &str) -> Result<JudgmentSet, TrecParseError> {
    let mut set = JudgmentSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [turn, _, pid, grade] = fields[..] else {
            return Err(err(i + 1, "expected 4 fields", line));
        };
        let grade: i64 = grade.parse().map_err(|_| err(i + 1, "grade is not an integer", line))?;
        set.insert(turn, pid, grade)
            .map_err(|_| err(i + 1, "grade outside 0..=4", line))?;
    }
    Ok(set)
}

pub fn format_qrels(set: &JudgmentSet) -> String {
    let mut out = String::new();
    for (turn, pid, grade) in set.iter() {
        let _ = writeln!(out, "{turn} 0 {pid} {grade}");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFile {
    pub tag: String,
    /// One list per turn, in order of first appearance.
    pub lists: Vec<ScoredList>,
}

pub fn parse_run(text: &str) -> Result<RunFile, TrecParseError> {
    let mut tag: Option<String> = None;
    let mut order: Vec<String> = Vec::new();
    let mut turns: BTreeMap<String, Vec<ScoredEntry>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [turn, _, pid, rank, score, run_tag] = fields[..] else {
            return Err(err(i + 1, "expected 6 fields", line));
        };
        let rank: usize = rank.parse().map_err(|_| err(i + 1, "rank is not an integer", line))?;
        if rank == 0 {
            return Err(err(i + 1, "ranks start at 1", line));
        }
        let score: f64 = score.parse().map_err(|_| err(i + 1, "score is not a number", line))?;
        match &tag {
            None => tag = Some(run_tag.to_string()),
            Some(t) if t != run_tag => return Err(err(i + 1, "mixed run tags", line)),
            Some(_) => {}
        }
        let entries = turns.entry(turn.to_string()).or_insert_with(|| {
            order.push(turn.to_string());
            Vec::new()
        });
        if entries.iter().any(|e| e.passage_id == pid) {
            return Err(err(i + 1, "duplicate passage in turn", line));
        }
        entries.push(ScoredEntry {
            passage_id: pid.to_string(),
            score,
            rank,
        });
    }
    let mut lists = Vec::with_capacity(order.len());
    for turn in order {
        let mut entries = turns.remove(&turn).unwrap_or_default();
        entries.sort_by_key(|e| e.rank);
        if entries.iter().enumerate().any(|(i, e)| e.rank != i + 1) {
            return Err(err(0, "ranks are not 1..n", &turn));
        }
        lists.push(ScoredList { turn_id: turn, entries });
    }
    Ok(RunFile {
        tag: tag.unwrap_or_default(),
        lists,
    })
}

/// Scores are written with six decimals.
pub fn format_run(lists: &[ScoredList], tag: &str) -> String {
    let mut out = String::new();
    for list in lists {
        for e in &list.entries {
            let _ = writeln!(out, "{} Q0 {} {} {:.6} {}", list.turn_id, e.passage_id, e.rank, e.score, tag);
        }
    }
    out
}
