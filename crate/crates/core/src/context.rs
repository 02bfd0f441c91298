//! Conversational state and context-independent query construction.
//!
//! The rewriter input places the current query first, then the history from
//! oldest to newest:
//!
//! ```text
//! q_i [CTX] q_1 p_1 [TURN] q_2 p_2 [TURN] ... [TURN] q_{i-1} p_{i-1}
//! ```
//!
//! Markers are surrounded by single spaces. A history block omits its passage
//! when none was recorded for that turn.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{split_sentences, tokenize};
use crate::backend::{GatewayError, GatewayErrorKind, RewriterBackend};
use crate::index::Passage;

pub const CTX_MARKER: &str = "[CTX]";
pub const TURN_MARKER: &str = "[TURN]";
/// Input budget of the rewriter, in estimated subword tokens.
pub const PROMPT_TOKEN_BUDGET: usize = 512;
/// Output budget of the rewriter, in tokens.
pub const MAX_REWRITE_TOKENS: usize = 64;
/// Sentences of a turn's top passage that enter later prompts.
pub const PROMPT_PASSAGE_SENTENCES: usize = 2;

const PRONOUNS: [&str; 9] = ["it", "its", "he", "his", "she", "her", "they", "their", "them"];
const POSSESSIVES: [&str; 3] = ["its", "his", "their"];

/// Whitespace words scaled by 1.35 for subword inflation, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    (text.split_whitespace().count() * 135).div_ceil(100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub turn_number: usize,
    pub raw_query: String,
    #[serde(default)]
    pub rewritten_query: Option<String>,
    #[serde(default)]
    pub top_passage: Option<Passage>,
    #[serde(default)]
    pub answer: Option<String>,
}

impl ConversationTurn {
    /// The history block text: the query followed by the leading sentences of
    /// the recorded passage, if any.
    pub fn history_block(&self) -> String {
        match &self.top_passage {
            Some(p) => {
                let snippet: Vec<String> = split_sentences(&p.text)
                    .into_iter()
                    .take(PROMPT_PASSAGE_SENTENCES)
                    .collect();
                if snippet.is_empty() {
                    self.raw_query.clone()
                } else {
                    format!("{} {}", self.raw_query, snippet.join(" "))
                }
            }
            None => self.raw_query.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("turn numbers must be contiguous from 1: expected {expected}, found {found}")]
    NonContiguousTurn { expected: usize, found: usize },
}

/// An append-only conversation on one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationSession {
    pub session_id: String,
    #[serde(default)]
    pub topic_label: Option<String>,
    #[serde(default)]
    turns: Vec<ConversationTurn>,
}

impl ConversationSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            topic_label: None,
            turns: Vec::new(),
        }
    }

    /// A session whose history holds only the given raw queries.
    pub fn from_queries<S: AsRef<str>>(session_id: impl Into<String>, queries: &[S]) -> Self {
        let mut session = Self::new(session_id);
        for q in queries {
            session.push_query(q.as_ref());
        }
        session
    }

    pub fn turns(&self) -> &[ConversationTurn] {
        &self.turns
    }

    pub fn next_turn_number(&self) -> usize {
        self.turns.len() + 1
    }

    pub fn append(&mut self, turn: ConversationTurn) -> Result<&ConversationTurn, SessionError> {
        let expected = self.next_turn_number();
        if turn.turn_number != expected {
            return Err(SessionError::NonContiguousTurn {
                expected,
                found: turn.turn_number,
            });
        }
        self.turns.push(turn);
        Ok(self.turns.last().expect("just pushed"))
    }

    /// Appends a turn with only its raw query recorded.
    pub fn push_query(&mut self, raw_query: &str) -> &ConversationTurn {
        let turn = ConversationTurn {
            turn_number: self.next_turn_number(),
            raw_query: raw_query.to_string(),
            rewritten_query: None,
            top_passage: None,
            answer: None,
        };
        self.append(turn).expect("turn number is next")
    }

    /// Checks the contiguity invariant, e.g. after deserializing.
    pub fn validate(&self) -> Result<(), SessionError> {
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.turn_number != i + 1 {
                return Err(SessionError::NonContiguousTurn {
                    expected: i + 1,
                    found: turn.turn_number,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewritePrompt {
    pub text: String,
    pub token_estimate: usize,
    #[serde(skip)]
    current_query: String,
    #[serde(skip)]
    blocks: Vec<String>,
}

impl RewritePrompt {
    pub fn from_parts(current_query: &str, blocks: Vec<String>) -> Self {
        let text = if blocks.is_empty() {
            current_query.to_string()
        } else {
            let separator = format!(" {TURN_MARKER} ");
            format!("{current_query} {CTX_MARKER} {}", blocks.join(&separator))
        };
        Self {
            token_estimate: estimate_tokens(&text),
            text,
            current_query: current_query.to_string(),
            blocks,
        }
    }

    pub fn current_query(&self) -> &str {
        &self.current_query
    }

    pub fn history_blocks(&self) -> &[String] {
        &self.blocks
    }
}

pub fn build_rewrite_prompt(session: &ConversationSession, current_query: &str) -> RewritePrompt {
    let blocks = session.turns().iter().map(ConversationTurn::history_block).collect();
    RewritePrompt::from_parts(current_query, blocks)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("current query needs {needed} tokens but the budget is {budget}")]
    BudgetTooSmall { needed: usize, budget: usize },
    #[error("rewriter unavailable and no fallback configured: {0}")]
    RewriterUnavailable(GatewayError),
    #[error(transparent)]
    Gateway(GatewayError),
}

/// Drops whole history blocks, oldest first, until the prompt fits `budget`.
pub fn truncate_prompt(prompt: &RewritePrompt, budget: usize) -> Result<RewritePrompt, ContextError> {
    let needed = estimate_tokens(&prompt.current_query);
    if needed > budget {
        return Err(ContextError::BudgetTooSmall { needed, budget });
    }
    if prompt.token_estimate <= budget {
        return Ok(prompt.clone());
    }
    let mut blocks = prompt.blocks.clone();
    loop {
        blocks.remove(0);
        let candidate = RewritePrompt::from_parts(&prompt.current_query, blocks.clone());
        if candidate.token_estimate <= budget {
            return Ok(candidate);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteOutcome {
    pub text: String,
    /// Set when the deterministic fallback replaced the backend.
    pub degraded: bool,
}

/// Produces a context-independent query for `current_query`.
///
/// The first turn of a session passes through unchanged. Backend output is
/// capped at [`MAX_REWRITE_TOKENS`] whitespace tokens.
pub fn rewrite(
    session: &ConversationSession,
    current_query: &str,
    backend: &dyn RewriterBackend,
    fallback: bool,
) -> Result<RewriteOutcome, ContextError> {
    if session.turns().is_empty() {
        return Ok(RewriteOutcome {
            text: current_query.to_string(),
            degraded: false,
        });
    }
    let prompt = truncate_prompt(&build_rewrite_prompt(session, current_query), PROMPT_TOKEN_BUDGET)?;
    let served = backend.rewrite(&prompt, MAX_REWRITE_TOKENS).and_then(|text| {
        let words: Vec<&str> = text.split_whitespace().take(MAX_REWRITE_TOKENS).collect();
        if words.is_empty() {
            Err(GatewayError::contract("empty rewrite"))
        } else {
            Ok(words.join(" "))
        }
    });
    match served {
        Ok(text) => Ok(RewriteOutcome { text, degraded: false }),
        Err(_) if fallback => Ok(RewriteOutcome {
            text: fallback_rewrite(session, current_query),
            degraded: true,
        }),
        Err(e) if e.kind == GatewayErrorKind::Unreachable => Err(ContextError::RewriterUnavailable(e)),
        Err(e) => Err(ContextError::Gateway(e)),
    }
}

/// Capitalized word runs of `query`, in order of appearance.
///
/// Runs end at punctuation. A single capitalized word that starts a sentence
/// is not an entity, and neither is the pronoun "I".
pub fn capitalized_runs(query: &str) -> Vec<String> {
    let mut runs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_starts_sentence = false;
    let mut sentence_start = true;

    let close = |current: &mut Vec<&str>, starts_sentence: bool, runs: &mut Vec<String>| {
        if !current.is_empty() {
            if !(current.len() == 1 && (starts_sentence || current[0] == "I")) {
                runs.push(current.join(" "));
            }
            current.clear();
        }
    };

    for raw in query.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let word = word.strip_suffix("'s").unwrap_or(word);
        let capitalized = word.chars().next().is_some_and(char::is_uppercase);
        if capitalized {
            if current.is_empty() {
                current_starts_sentence = sentence_start;
            }
            current.push(word);
        } else {
            close(&mut current, current_starts_sentence, &mut runs);
        }
        let trailing_punct = raw.ends_with(|c: char| !c.is_alphanumeric()) || raw.ends_with("'s");
        if trailing_punct {
            close(&mut current, current_starts_sentence, &mut runs);
        }
        sentence_start = raw.ends_with(['.', '!', '?']);
    }
    close(&mut current, current_starts_sentence, &mut runs);
    runs
}

/// Entities mentioned in the session's raw queries, newest first, without repeats.
pub fn session_entities(session: &ConversationSession) -> Vec<String> {
    let mut entities: Vec<String> = Vec::new();
    for turn in session.turns().iter().rev() {
        for run in capitalized_runs(&turn.raw_query).into_iter().rev() {
            if !entities.contains(&run) {
                entities.push(run);
            }
        }
    }
    entities
}

/// Deterministic rule-based rewrite used when no rewriter model is available.
///
/// 1. The first third-person pronoun is replaced by the newest entity from
///    earlier queries (`its`, `his`, `their` and possessive `her` take `'s`).
/// 2. Otherwise, when the query mentions no earlier entity, `in <entity>` is
///    inserted before any trailing sentence terminator.
/// 3. Turn 1, or a history without entities, passes through unchanged.
pub fn fallback_rewrite(session: &ConversationSession, current_query: &str) -> String {
    let entities = session_entities(session);
    let Some(newest) = entities.first() else {
        return current_query.to_string();
    };

    let spans = word_spans(current_query);
    for (i, &(start, end)) in spans.iter().enumerate() {
        let lower = current_query[start..end].to_lowercase();
        if !PRONOUNS.contains(&lower.as_str()) {
            continue;
        }
        let possessive = POSSESSIVES.contains(&lower.as_str())
            || (lower == "her"
                && spans
                    .get(i + 1)
                    .is_some_and(|&(next, _)| current_query[end..next].chars().all(char::is_whitespace)));
        let replacement = if possessive {
            format!("{newest}'s")
        } else {
            newest.clone()
        };
        return format!("{}{}{}", &current_query[..start], replacement, &current_query[end..]);
    }

    let query_tokens = tokenize(current_query);
    let mentions_entity = entities.iter().any(|entity| {
        tokenize(entity)
            .iter()
            .any(|e| query_tokens.iter().any(|q| q.surface == e.surface))
    });
    if mentions_entity {
        return current_query.to_string();
    }

    let trimmed = current_query.trim_end();
    let body = trimmed.trim_end_matches(['?', '.', '!']);
    let terminator = &trimmed[body.len()..];
    format!("{body} in {newest}{terminator}")
}

/// Byte spans of maximal alphanumeric runs.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}
