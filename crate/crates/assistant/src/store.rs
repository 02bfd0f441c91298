//! Index directories on disk.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use convsearch_core::index::build_index;
use convsearch_core::{AnalyzerConfig, Index, IndexError, Passage};
use thiserror::Error;

use crate::collection::{ingest_collection, CollectionError, CollectionFormat};

pub const INDEX_FILE: &str = "index.bin";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("index I/O at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Collection(#[from] CollectionError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn index_file(dir: &Path) -> PathBuf {
    dir.join(INDEX_FILE)
}

/// Writes `index` into `dir`, replacing any previous index atomically.
pub fn save(index: &Index, dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let target = index_file(dir);
    let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
    let mut file = fs::File::create(&tmp).map_err(io(&tmp))?;
    file.write_all(&index.to_bytes()).map_err(io(&tmp))?;
    file.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, &target).map_err(io(&target))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Index, StoreError> {
    let path = index_file(dir);
    let bytes = fs::read(&path).map_err(io(&path))?;
    Ok(Index::from_bytes(&bytes)?)
}

/// Builds an index from a collection file and saves it to `out`.
pub fn build_from_collection(
    input: &Path,
    format: CollectionFormat,
    out: &Path,
    config: AnalyzerConfig,
) -> Result<Index, StoreError> {
    let mut first_error = None;
    let passages = ingest_collection(input, format)?.map_while(|item| match item {
        Ok(p) => Some(p),
        Err(e) => {
            first_error = Some(e);
            None
        }
    });
    let built = build_index(passages, config);
    if let Some(e) = first_error {
        return Err(e.into());
    }
    let index = built?;
    save(&index, out)?;
    Ok(index)
}

/// Builds from in-memory passages; used by fixtures and tests.
pub fn build_from_passages(passages: Vec<Passage>, config: AnalyzerConfig) -> Result<Index, StoreError> {
    Ok(build_index(passages, config)?)
}
