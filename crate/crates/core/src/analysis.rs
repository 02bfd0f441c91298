//! Deterministic text normalization shared by indexing, retrieval, prompt
//! budgeting and the text metrics.
//!
//! The pipeline is `tokenize -> remove_stopwords -> stem`. Tokens are
//! lowercased maximal runs of alphanumeric characters; everything else is a
//! separator.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::porter;

/// The stopword list bundled with the crate, one word per line, sorted.
pub const DEFAULT_STOPWORDS: &str = include_str!("../resources/stopwords.txt");

/// A single token of analyzed text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// Ordinal of the token in its source text, counted before stopword removal.
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemmerKind {
    None,
    #[default]
    Porter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stopwords: BTreeSet<String>,
    pub stemmer: StemmerKind,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            stopwords: default_stopwords(),
            stemmer: StemmerKind::Porter,
        }
    }
}

impl AnalyzerConfig {
    /// Tokenization only: no stopword removal, no stemming.
    pub fn plain() -> Self {
        Self {
            lowercase: true,
            stopwords: BTreeSet::new(),
            stemmer: StemmerKind::None,
        }
    }
}

pub fn default_stopwords() -> BTreeSet<String> {
    DEFAULT_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(ToString::to_string)
        .collect()
}

/// Lowercased maximal runs of alphanumeric characters, in order.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with(text, true)
}

fn tokenize_with(text: &str, lowercase: bool) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<Token>| {
        if !current.is_empty() {
            let position = tokens.len();
            tokens.push(Token {
                surface: core::mem::take(current),
                position,
            });
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            if lowercase {
                current.extend(c.to_lowercase());
            } else {
                current.push(c);
            }
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

pub fn remove_stopwords(tokens: Vec<Token>, config: &AnalyzerConfig) -> Vec<Token> {
    tokens
        .into_iter()
        .filter(|t| !config.stopwords.contains(&t.surface))
        .collect()
}

pub fn stem(token: &str) -> String {
    porter::stem(token)
}

/// Split after `.`, `!` or `?` when followed by whitespace or end of text.
///
/// Whitespace is normalized to single spaces first, so joining the result
/// with `" "` gives back the normalized text.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
        if word.ends_with(['.', '!', '?']) {
            sentences.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// A configured analysis pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Analyzer {
    config: AnalyzerConfig,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    /// Full pipeline, keeping positions.
    pub fn analyze_tokens(&self, text: &str) -> Vec<Token> {
        let tokens = remove_stopwords(tokenize_with(text, self.config.lowercase), &self.config);
        match self.config.stemmer {
            StemmerKind::None => tokens,
            StemmerKind::Porter => tokens
                .into_iter()
                .map(|t| Token {
                    surface: porter::stem(&t.surface),
                    position: t.position,
                })
                .collect(),
        }
    }

    /// Full pipeline, surfaces only.
    pub fn analyze(&self, text: &str) -> Vec<String> {
        self.analyze_tokens(text).into_iter().map(|t| t.surface).collect()
    }
}
