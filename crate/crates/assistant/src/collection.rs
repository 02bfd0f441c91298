//! Passage collection readers.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use convsearch_core::Passage;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CollectionFormat {
    /// `id<TAB>text`, one passage per line.
    #[value(name = "tsv_id_text")]
    TsvIdText,
    /// One `{"id": ..., "text": ...}` object per line.
    Jsonl,
}

impl FromStr for CollectionFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv_id_text" | "tsv" => Ok(Self::TsvIdText),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown collection format {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CollectionError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}: {excerpt:?}")]
    Parse { line: usize, reason: String, excerpt: String },
}

fn excerpt(line: &str) -> String {
    line.chars().take(60).collect()
}

#[derive(Deserialize)]
struct JsonRecord {
    id: String,
    text: String,
}

/// Parses one record; `None` for blank lines.
pub fn parse_record(line: &str, line_number: usize, format: CollectionFormat) -> Result<Option<Passage>, CollectionError> {
    let trimmed = line.trim_end_matches(['\r', '\n']);
    if trimmed.trim().is_empty() {
        return Ok(None);
    }
    let parse_err = |reason: &str| CollectionError::Parse {
        line: line_number,
        reason: reason.to_string(),
        excerpt: excerpt(trimmed),
    };
    let (id, text) = match format {
        CollectionFormat::TsvIdText => {
            let (id, text) = trimmed.split_once('\t').ok_or_else(|| parse_err("missing tab separator"))?;
            (id.trim().to_string(), text.to_string())
        }
        CollectionFormat::Jsonl => {
            let record: JsonRecord = serde_json::from_str(trimmed).map_err(|e| parse_err(&e.to_string()))?;
            (record.id, record.text)
        }
    };
    if id.is_empty() {
        return Err(parse_err("empty id"));
    }
    Ok(Some(Passage::new(id, text)))
}

/// Streams passages from `path` in file order.
pub fn ingest_collection(
    path: &Path,
    format: CollectionFormat,
) -> Result<impl Iterator<Item = Result<Passage, CollectionError>>, CollectionError> {
    let file = File::open(path).map_err(|source| CollectionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let display = path.display().to_string();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(line) => parse_record(&line, i + 1, format).transpose(),
            Err(source) => Some(Err(CollectionError::Io {
                path: display.clone(),
                source,
            })),
        }))
}
