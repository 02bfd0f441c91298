//! Small embedded corpora for demos, tests and the acceptance suite.

use convsearch_core::{AnalyzerConfig, Index, Passage};

use crate::collection::{parse_record, CollectionFormat};
use crate::store::build_from_passages;

pub const LUCCA_COLLECTION: &str = include_str!("../fixtures/lucca.tsv");
pub const LUCCA_REWRITES: &str = include_str!("../fixtures/rewrites_lucca.jsonl");
pub const EXAMPLE_REWRITES: &str = include_str!("../fixtures/rewrites_examples.jsonl");
pub const COREF_COLLECTION: &str = include_str!("../fixtures/coref/collection.tsv");
pub const COREF_TOPICS: &str = include_str!("../fixtures/coref/topics.jsonl");
pub const COREF_QRELS: &str = include_str!("../fixtures/coref/qrels.txt");

/// A three-turn conversation about Lucca.
pub const LUCCA_SCRIPT: [&str; 3] = [
    "How is the climate in Lucca?",
    "Tell me about its origins.",
    "What monuments should I visit?",
];

pub fn passages(tsv: &str) -> Vec<Passage> {
    tsv.lines()
        .enumerate()
        .filter_map(|(i, line)| parse_record(line, i + 1, CollectionFormat::TsvIdText).expect("fixture line"))
        .collect()
}

fn index_of(tsv: &str) -> Index {
    build_from_passages(passages(tsv), AnalyzerConfig::default()).expect("fixture index")
}

pub fn lucca_index() -> Index {
    index_of(LUCCA_COLLECTION)
}

pub fn coref_index() -> Index {
    index_of(COREF_COLLECTION)
}
