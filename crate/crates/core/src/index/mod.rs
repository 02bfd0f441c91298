//! Inverted index plus passage store.
//!
//! External string ids are compacted to dense ordinals in insertion order.
//! Postings carry term frequencies only; positions are not stored.

mod codec;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{Analyzer, AnalyzerConfig};

pub use codec::FORMAT_VERSION;

/// Dense document ordinal assigned at build time.
pub type DocOrdinal = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassageSource {
    Marco,
    Car,
    Wapo,
    #[default]
    Local,
}

impl PassageSource {
    /// Infers the source collection from id prefixes such as `MARCO_123`.
    pub fn from_id(id: &str) -> Self {
        let prefix = id.split('_').next().unwrap_or_default();
        if prefix.eq_ignore_ascii_case("marco") {
            Self::Marco
        } else if prefix.eq_ignore_ascii_case("car") {
            Self::Car
        } else if prefix.eq_ignore_ascii_case("wapo") {
            Self::Wapo
        } else {
            Self::Local
        }
    }

    fn code(self) -> u8 {
        match self {
            Self::Marco => 0,
            Self::Car => 1,
            Self::Wapo => 2,
            Self::Local => 3,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Self::Marco,
            1 => Self::Car,
            2 => Self::Wapo,
            3 => Self::Local,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: PassageSource,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let id = id.into();
        let source = PassageSource::from_id(&id);
        Self {
            id,
            text: text.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingsList<'a> {
    pub term: &'a str,
    /// `(doc_ordinal, term_frequency)` sorted by ordinal.
    pub entries: &'a [(DocOrdinal, u32)],
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct TermEntry {
    collection_frequency: u64,
    postings: Vec<(DocOrdinal, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexStats {
    pub doc_count: usize,
    pub total_tokens: u64,
    /// Post-analysis token count per document ordinal.
    pub doc_lengths: Vec<u32>,
}

impl IndexStats {
    pub fn avg_doc_length(&self) -> f64 {
        self.total_tokens as f64 / self.doc_count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("duplicate passage id {0:?}")]
    DuplicateId(String),
    #[error("passage {0:?} has empty text")]
    EmptyPassage(String),
    #[error("the collection contains no passages")]
    EmptyCollection,
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u8, expected: u8 },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
}

/// An immutable, built index.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    analyzer: Analyzer,
    passages: Vec<Passage>,
    ordinals: BTreeMap<String, DocOrdinal>,
    terms: BTreeMap<String, TermEntry>,
    stats: IndexStats,
}

impl Index {
    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn doc_count(&self) -> usize {
        self.stats.doc_count
    }

    pub fn doc_length(&self, doc: DocOrdinal) -> u32 {
        self.stats.doc_lengths[doc as usize]
    }

    /// Postings for an already-analyzed term.
    pub fn postings(&self, term: &str) -> Option<PostingsList<'_>> {
        self.terms.get_key_value(term).map(|(term, entry)| PostingsList {
            term,
            entries: &entry.postings,
        })
    }

    pub fn collection_frequency(&self, term: &str) -> u64 {
        self.terms.get(term).map_or(0, |e| e.collection_frequency)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.terms.get(term).map_or(0, |e| e.postings.len())
    }

    /// Frequency of `term` in document `doc`.
    pub fn term_frequency(&self, term: &str, doc: DocOrdinal) -> u32 {
        self.terms.get(term).map_or(0, |e| {
            e.postings
                .binary_search_by_key(&doc, |&(d, _)| d)
                .map_or(0, |i| e.postings[i].1)
        })
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn passage(&self, doc: DocOrdinal) -> &Passage {
        &self.passages[doc as usize]
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn ordinal(&self, id: &str) -> Option<DocOrdinal> {
        self.ordinals.get(id).copied()
    }

    pub fn passage_by_id(&self, id: &str) -> Option<&Passage> {
        self.ordinal(id).map(|d| self.passage(d))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        codec::decode(bytes)
    }
}

/// Single-writer incremental index construction.
#[derive(Debug, Default)]
pub struct IndexBuilder {
    analyzer: Analyzer,
    passages: Vec<Passage>,
    ordinals: BTreeMap<String, DocOrdinal>,
    terms: BTreeMap<String, TermEntry>,
    doc_lengths: Vec<u32>,
    total_tokens: u64,
}

impl IndexBuilder {
    pub fn new(config: AnalyzerConfig) -> Self {
        Self {
            analyzer: Analyzer::new(config),
            ..Self::default()
        }
    }

    pub fn add(&mut self, passage: Passage) -> Result<DocOrdinal, IndexError> {
        if self.ordinals.contains_key(&passage.id) {
            return Err(IndexError::DuplicateId(passage.id));
        }
        if passage.text.trim().is_empty() {
            return Err(IndexError::EmptyPassage(passage.id));
        }
        let doc = self.passages.len() as DocOrdinal;
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let mut length = 0u32;
        for term in self.analyzer.analyze(&passage.text) {
            *counts.entry(term).or_default() += 1;
            length += 1;
        }
        for (term, tf) in counts {
            let entry = self.terms.entry(term).or_default();
            entry.collection_frequency += u64::from(tf);
            entry.postings.push((doc, tf));
        }
        self.doc_lengths.push(length);
        self.total_tokens += u64::from(length);
        self.ordinals.insert(passage.id.clone(), doc);
        self.passages.push(passage);
        Ok(doc)
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn finish(self) -> Result<Index, IndexError> {
        if self.passages.is_empty() {
            return Err(IndexError::EmptyCollection);
        }
        Ok(Index {
            analyzer: self.analyzer,
            stats: IndexStats {
                doc_count: self.passages.len(),
                total_tokens: self.total_tokens,
                doc_lengths: self.doc_lengths,
            },
            passages: self.passages,
            ordinals: self.ordinals,
            terms: self.terms,
        })
    }
}

pub fn build_index<I>(passages: I, config: AnalyzerConfig) -> Result<Index, IndexError>
where
    I: IntoIterator<Item = Passage>,
{
    let mut builder = IndexBuilder::new(config);
    for passage in passages {
        builder.add(passage)?;
    }
    builder.finish()
}
