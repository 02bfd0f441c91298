//! Binary persistence format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CSIX" | version u8 | body | crc32(magic..body) u32
//! body := analyzer | passages | terms
//! analyzer := lowercase u8 | stemmer u8 | n u32 | n * str
//! passages := n u32 | n * (id str | source u8 | text str | length u32)
//! terms := total_tokens u64 | n u32 | n * (term str | cf u64 | m u32 | m * (doc u32 | tf u32))
//! str := len u32 | utf-8 bytes
//! ```
//!
//! Terms are written in sorted order, so identical indexes encode to
//! identical bytes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Index, IndexError, IndexStats, Passage, PassageSource, TermEntry};
use crate::analysis::{Analyzer, AnalyzerConfig, StemmerKind};

const MAGIC: &[u8; 4] = b"CSIX";
pub const FORMAT_VERSION: u8 = 1;

pub(super) fn encode(index: &Index) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);

    let config = index.analyzer.config();
    out.push(u8::from(config.lowercase));
    out.push(match config.stemmer {
        StemmerKind::None => 0,
        StemmerKind::Porter => 1,
    });
    put_u32(&mut out, config.stopwords.len() as u32);
    for word in &config.stopwords {
        put_str(&mut out, word);
    }

    put_u32(&mut out, index.passages.len() as u32);
    for (passage, &length) in index.passages.iter().zip(&index.stats.doc_lengths) {
        put_str(&mut out, &passage.id);
        out.push(passage.source.code());
        put_str(&mut out, &passage.text);
        put_u32(&mut out, length);
    }

    out.extend_from_slice(&index.stats.total_tokens.to_le_bytes());
    put_u32(&mut out, index.terms.len() as u32);
    for (term, entry) in &index.terms {
        put_str(&mut out, term);
        out.extend_from_slice(&entry.collection_frequency.to_le_bytes());
        put_u32(&mut out, entry.postings.len() as u32);
        for &(doc, tf) in &entry.postings {
            put_u32(&mut out, doc);
            put_u32(&mut out, tf);
        }
    }

    let checksum = crc32fast::hash(&out);
    put_u32(&mut out, checksum);
    out
}

pub(super) fn decode(bytes: &[u8]) -> Result<Index, IndexError> {
    if bytes.len() < MAGIC.len() + 1 + 4 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing header"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(IndexError::FormatVersionMismatch {
            found: bytes[4],
            expected: FORMAT_VERSION,
        });
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
    if crc32fast::hash(payload) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader {
        buf: payload,
        pos: 5,
    };

    let lowercase = r.u8()? != 0;
    let stemmer = match r.u8()? {
        0 => StemmerKind::None,
        1 => StemmerKind::Porter,
        other => return Err(corrupt(&format!("unknown stemmer code {other}"))),
    };
    let mut stopwords = BTreeSet::new();
    for _ in 0..r.u32()? {
        stopwords.insert(r.string()?);
    }

    let doc_count = r.u32()? as usize;
    let mut passages = Vec::with_capacity(doc_count.min(1 << 20));
    let mut doc_lengths = Vec::with_capacity(doc_count.min(1 << 20));
    let mut ordinals = BTreeMap::new();
    for doc in 0..doc_count {
        let id = r.string()?;
        let source = PassageSource::from_code(r.u8()?).ok_or_else(|| corrupt("bad source code"))?;
        let text = r.string()?;
        doc_lengths.push(r.u32()?);
        if ordinals.insert(id.clone(), doc as u32).is_some() {
            return Err(corrupt("duplicate passage id"));
        }
        passages.push(Passage { id, text, source });
    }

    let total_tokens = r.u64()?;
    if doc_lengths.iter().map(|&l| u64::from(l)).sum::<u64>() != total_tokens {
        return Err(corrupt("document lengths disagree with total token count"));
    }
    let mut terms = BTreeMap::new();
    for _ in 0..r.u32()? {
        let term = r.string()?;
        let collection_frequency = r.u64()?;
        let n = r.u32()? as usize;
        let mut postings = Vec::with_capacity(n.min(doc_count));
        let mut sum = 0u64;
        for _ in 0..n {
            let doc = r.u32()?;
            let tf = r.u32()?;
            if doc as usize >= doc_count || tf == 0 || postings.last().is_some_and(|&(d, _)| d >= doc) {
                return Err(corrupt("malformed postings"));
            }
            sum += u64::from(tf);
            postings.push((doc, tf));
        }
        if sum != collection_frequency {
            return Err(corrupt("collection frequency disagrees with postings"));
        }
        terms.insert(
            term,
            TermEntry {
                collection_frequency,
                postings,
            },
        );
    }
    if r.pos != r.buf.len() {
        return Err(corrupt("trailing bytes"));
    }
    if doc_count == 0 {
        return Err(IndexError::EmptyCollection);
    }

    Ok(Index {
        analyzer: Analyzer::new(AnalyzerConfig {
            lowercase,
            stopwords,
            stemmer,
        }),
        passages,
        ordinals,
        terms,
        stats: IndexStats {
            doc_count,
            total_tokens,
            doc_lengths,
        },
    })
}

fn corrupt(detail: &str) -> IndexError {
    IndexError::CorruptIndex(String::from(detail))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }
}
