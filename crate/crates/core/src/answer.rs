//! Answer construction from the top re-ranked passages.
//!
//! The summarizer input is the top-N passage texts joined by single spaces in
//! rank order. When no summarizer is available the extractive baseline is
//! used: whole sentences of the concatenated top-3 passages, cut as soon as
//! the minimum length is reached.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::split_sentences;
use crate::backend::{GatewayError, SummarizerBackend};
use crate::retrieval::ScoredList;
use crate::word_count;

/// Passages concatenated by the extractive baseline.
pub const BASELINE_PASSAGES: usize = 3;
pub const MIN_LENGTH_RANGE: core::ops::RangeInclusive<usize> = 20..=120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub num_beams: usize,
    pub no_repeat_ngram: usize,
    /// Advisory for the backend; the extractive baseline ignores it.
    pub early_stop_sentences: usize,
    pub min_length_words: usize,
    /// `None` means the word length of the summarizer input.
    pub max_length_words: Option<usize>,
    pub top_n_passages: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            num_beams: 4,
            no_repeat_ngram: 3,
            early_stop_sentences: 4,
            min_length_words: 20,
            max_length_words: None,
            top_n_passages: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("min_length_words {0} outside 20..=120")]
    MinLengthOutOfRange(usize),
    #[error("min_length_words {min} exceeds max_length_words {max}")]
    MinExceedsMax { min: usize, max: usize },
    #[error("top_n_passages must be at least 1")]
    NoPassages,
    #[error("summarizer input is empty")]
    EmptyInput,
    #[error("summarizer unavailable and no fallback configured: {0}")]
    SummarizerUnavailable(GatewayError),
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), AnswerError> {
        if !MIN_LENGTH_RANGE.contains(&self.min_length_words) {
            return Err(AnswerError::MinLengthOutOfRange(self.min_length_words));
        }
        if self.top_n_passages == 0 {
            return Err(AnswerError::NoPassages);
        }
        match self.max_length_words {
            Some(max) if max < self.min_length_words => Err(AnswerError::MinExceedsMax {
                min: self.min_length_words,
                max,
            }),
            _ => Ok(()),
        }
    }

    /// Fixes `max_length_words` for a concrete input. When the input is
    /// shorter than the minimum, the minimum is lowered to match.
    pub fn resolve(&self, input: &str) -> Self {
        let max = self.max_length_words.unwrap_or_else(|| word_count(input));
        Self {
            max_length_words: Some(max),
            min_length_words: self.min_length_words.min(max),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    Abstractive,
    ExtractiveBaseline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub text: String,
    pub mode: AnswerMode,
    pub source_passage_ids: Vec<String>,
    /// The backend overran `max_length_words` and the text was cut.
    #[serde(default)]
    pub truncated: bool,
    /// The baseline stood in for an unavailable summarizer.
    #[serde(default)]
    pub degraded: bool,
}

/// Texts of the first `n` ranked passages, in rank order.
pub fn top_passage_texts<'p>(
    ranked: &ScoredList,
    passage_text: impl Fn(&str) -> Option<&'p str>,
    n: usize,
) -> Vec<(&str, &'p str)> {
    ranked
        .entries
        .iter()
        .take(n)
        .filter_map(|e| passage_text(&e.passage_id).map(|t| (e.passage_id.as_str(), t)))
        .collect()
}

/// `p_1 p_2 ... p_N` with `N = min(n, |ranked|)`.
pub fn build_summarizer_input<'p>(
    ranked: &ScoredList,
    passage_text: impl Fn(&str) -> Option<&'p str>,
    n: usize,
) -> String {
    top_passage_texts(ranked, passage_text, n)
        .into_iter()
        .map(|(_, text)| text.trim())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Leading whole sentences of `text` until `min_length_words` is reached.
pub fn crop_sentences(text: &str, min_length_words: usize) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut words = 0;
    for sentence in split_sentences(text) {
        if words >= min_length_words {
            break;
        }
        words += word_count(&sentence);
        out.push(sentence);
    }
    out.join(" ")
}

pub fn extractive_baseline<'p>(
    ranked: &ScoredList,
    passage_text: impl Fn(&str) -> Option<&'p str>,
    min_length_words: usize,
) -> GeneratedAnswer {
    let top = top_passage_texts(ranked, passage_text, BASELINE_PASSAGES);
    let joined: Vec<&str> = top.iter().map(|(_, t)| t.trim()).collect();
    GeneratedAnswer {
        text: crop_sentences(&joined.join(" "), min_length_words),
        mode: AnswerMode::ExtractiveBaseline,
        source_passage_ids: top.iter().map(|(id, _)| id.to_string()).collect(),
        truncated: false,
        degraded: false,
    }
}

/// Longest sentence prefix within `max_words`, or the first `max_words`
/// words when even the first sentence is too long.
fn cut_to_budget(text: &str, max_words: usize) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut words = 0;
    for sentence in split_sentences(text) {
        let n = word_count(&sentence);
        if words + n > max_words {
            break;
        }
        words += n;
        out.push(sentence);
    }
    if out.is_empty() {
        return text.split_whitespace().take(max_words).collect::<Vec<_>>().join(" ");
    }
    out.join(" ")
}

/// Calls the summarizer with the resolved parameters.
///
/// `input` must be the summarizer input for `source_passage_ids`; with
/// `fallback` set, a failed call yields the extractive baseline over the same
/// text.
pub fn generate_answer(
    input: &str,
    params: &GenerationParams,
    backend: &dyn SummarizerBackend,
    fallback: bool,
    source_passage_ids: Vec<String>,
) -> Result<GeneratedAnswer, AnswerError> {
    if input.trim().is_empty() {
        return Err(AnswerError::EmptyInput);
    }
    params.validate()?;
    let resolved = params.resolve(input);
    let max = resolved.max_length_words.expect("resolved");
    match backend.summarize(input, &resolved) {
        Ok(summary) if !summary.trim().is_empty() => {
            let over = word_count(&summary) > max;
            Ok(GeneratedAnswer {
                text: if over { cut_to_budget(&summary, max) } else { summary.trim().to_string() },
                mode: AnswerMode::Abstractive,
                source_passage_ids,
                truncated: over,
                degraded: false,
            })
        }
        Ok(_) if fallback => Ok(baseline_from_input(input, &resolved, source_passage_ids)),
        Ok(_) => Err(AnswerError::SummarizerUnavailable(GatewayError::contract("empty summary"))),
        Err(_) if fallback => Ok(baseline_from_input(input, &resolved, source_passage_ids)),
        Err(e) => Err(AnswerError::SummarizerUnavailable(e)),
    }
}

fn baseline_from_input(input: &str, params: &GenerationParams, source_passage_ids: Vec<String>) -> GeneratedAnswer {
    GeneratedAnswer {
        text: crop_sentences(input, params.min_length_words),
        mode: AnswerMode::ExtractiveBaseline,
        source_passage_ids,
        truncated: false,
        degraded: true,
    }
}
