use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{MetricError, RewritePair};
use crate::analysis::tokenize;
use crate::porter;

fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 with clipped n-gram precision, uniform weights and the
/// brevity penalty against the closest reference length.
pub fn bleu4(pairs: &[RewritePair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for pair in pairs {
        if pair.references.is_empty() {
            return Err(MetricError::NoReferences(pair.turn_id.clone()));
        }
        let hyp = words(&pair.hypothesis);
        let refs: Vec<Vec<String>> = pair.references.iter().map(|r| words(r)).collect();
        hyp_len += hyp.len();
        ref_len += refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&len| (len.abs_diff(hyp.len()), len))
            .unwrap_or(0);
        for n in 1..=4 {
            let hyp_counts = ngram_counts(&hyp, n);
            let mut max_ref: BTreeMap<&[String], usize> = BTreeMap::new();
            for r in &refs {
                for (gram, count) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(count);
                }
            }
            for (gram, count) in hyp_counts {
                matched[n - 1] += count.min(max_ref.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }
    if hyp_len == 0 || matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| libm::log(m as f64 / t as f64))
        .sum::<f64>()
        / 4.0;
    let brevity = if hyp_len > ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / hyp_len as f64)
    };
    Ok(brevity * libm::exp(log_precision))
}

pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 against the best-matching reference.
pub fn rouge_l(hypothesis: &str, references: &[String]) -> f64 {
    let hyp = words(hypothesis);
    references
        .iter()
        .map(|r| {
            let reference = words(r);
            let lcs = lcs_length(&hyp, &reference);
            if lcs == 0 {
                return 0.0;
            }
            let p = lcs as f64 / hyp.len() as f64;
            let r = lcs as f64 / reference.len() as f64;
            2.0 * p * r / (p + r)
        })
        .fold(0.0, f64::max)
}

/// Greedy left-to-right alignment: exact matches first, then matches on
/// Porter stems among the still-unaligned words.
fn align(hyp: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used_h = vec![false; hyp.len()];
    let mut used_r = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let hyp_stems: Vec<String> = hyp.iter().map(|w| porter::stem(w)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|w| porter::stem(w)).collect();
    for (hs, rs) in [(hyp, reference), (&hyp_stems[..], &ref_stems[..])] {
        for (i, h) in hs.iter().enumerate() {
            if used_h[i] {
                continue;
            }
            if let Some(j) = (0..rs.len()).find(|&j| !used_r[j] && rs[j] == *h) {
                used_h[i] = true;
                used_r[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn meteor_single(hyp: &[String], reference: &[String]) -> f64 {
    let alignment = align(hyp, reference);
    let m = alignment.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let chunks = 1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let frag = chunks as f64 / m as f64;
    fmean * (1.0 - 0.5 * frag * frag * frag)
}

/// Simplified METEOR (exact and stem matching, no synonyms), best reference.
pub fn meteor_lite(hypothesis: &str, references: &[String]) -> f64 {
    let hyp = words(hypothesis);
    references
        .iter()
        .map(|r| meteor_single(&hyp, &words(r)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn pair(h: &str, refs: &[&str]) -> RewritePair {
        RewritePair {
            turn_id: "t".into(),
            hypothesis: h.into(),
            references: refs.iter().map(|r| r.to_string()).collect(),
        }
    }

    #[test]
    fn bleu_identity_and_errors() {
        let p = pair("what are the symptoms of throat cancer", &["what are the symptoms of throat cancer"]);
        assert!((bleu4(&[p]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(bleu4(&[]), Err(MetricError::EmptyCorpus));
        assert!(bleu4(&[pair("a b c", &[])]).is_err());
        assert_eq!(bleu4(&[pair("a b c", &["a b c"])]).unwrap(), 0.0);
    }

    #[test]
    fn bleu_hand_computed() {
        // 5 hyp words vs 6 ref words; p1=5/5, p2=4/4, p3=3/3, p4=2/2 with brevity exp(1-6/5).
        let p = pair("is throat cancer treatable today", &["is throat cancer treatable today then"]);
        let expected = libm::exp(1.0 - 6.0 / 5.0);
        assert!((bleu4(&[p]).unwrap() - expected).abs() < 1e-12);
        // clipping: "the the the the the" against "the cat" gives p1 = 1/5 but p2 = 0.
        assert_eq!(bleu4(&[pair("the the the the the", &["the cat"])]).unwrap(), 0.0);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l("a b c", &["a b c".into()]), 1.0);
        assert_eq!(rouge_l("a b c", &["x y".into()]), 0.0);
        // LCS("a b c d", "a c e") = 2 -> P=1/2 R=2/3
        let expected = 2.0 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0);
        assert!((rouge_l("a b c d", &["a c e".into(), "z".into()]) - expected).abs() < 1e-12);
        assert_eq!(rouge_l("a", &[]), 0.0);
        assert!((rouge_l("a b c d", &["a c d".into()]) - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn meteor_examples() {
        assert_eq!(meteor_lite("x", &["y".into()]), 0.0);
        // single chunk over 3 matches: penalty 0.5/27
        let expected = 1.0 - 0.5 / 27.0;
        assert!((meteor_lite("a b c", &["a b c".into()]) - expected).abs() < 1e-12);
        // stem match: "cancers" ~ "cancer"
        assert!((meteor_lite("throat cancers", &["throat cancer".into()]) - (1.0 - 0.5 / 8.0)).abs() < 1e-12);
        // swapped order: two chunks of one
        let p = 1.0;
        let fmean = 10.0 * p * p / (p + 9.0 * p);
        assert!((meteor_lite("b a", &["a b".into()]) - fmean * (1.0 - 0.5)).abs() < 1e-12);
    }
}
