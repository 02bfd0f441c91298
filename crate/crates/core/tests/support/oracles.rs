//! Brute-force metric implementations written straight from the definitions.
//! Shared by the metric oracle tests and the acceptance runner.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use convsearch_core::metrics::Gain;
use convsearch_core::porter;

pub struct Instance {
    pub run: Vec<String>,
    pub qrels: HashMap<String, u8>,
    pub k: usize,
}

fn is_rel(inst: &Instance, id: &str, threshold: u8) -> bool {
    inst.qrels.get(id).is_some_and(|&g| g >= threshold)
}

pub fn precision(inst: &Instance, threshold: u8) -> f64 {
    let mut hits = 0.0;
    for i in 0..inst.k {
        if let Some(id) = inst.run.get(i) {
            if is_rel(inst, id, threshold) {
                hits += 1.0;
            }
        }
    }
    hits / inst.k as f64
}

pub fn relevant_set(inst: &Instance, threshold: u8) -> HashSet<&str> {
    inst.qrels
        .iter()
        .filter(|(_, &g)| g >= threshold)
        .map(|(id, _)| id.as_str())
        .collect()
}

pub fn recall(inst: &Instance, threshold: u8) -> f64 {
    let relevant = relevant_set(inst, threshold);
    if relevant.is_empty() {
        return 0.0;
    }
    let retrieved: HashSet<&str> = inst.run.iter().map(String::as_str).collect();
    relevant.intersection(&retrieved).count() as f64 / relevant.len() as f64
}

/// Mean over every relevant passage of the precision at its rank, with
/// unretrieved relevant passages contributing zero.
pub fn average_precision(inst: &Instance, threshold: u8) -> f64 {
    let relevant = relevant_set(inst, threshold);
    if relevant.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for doc in &relevant {
        if let Some(pos) = inst.run.iter().position(|id| id == doc) {
            let prefix = &inst.run[..=pos];
            let hits = prefix.iter().filter(|id| relevant.contains(id.as_str())).count();
            total += hits as f64 / (pos + 1) as f64;
        }
    }
    total / relevant.len() as f64
}

pub fn reciprocal_rank(inst: &Instance, threshold: u8) -> f64 {
    let mut best: Option<usize> = None;
    for (i, id) in inst.run.iter().enumerate() {
        if is_rel(inst, id, threshold) {
            best = Some(best.map_or(i + 1, |b: usize| b.min(i + 1)));
        }
    }
    best.map_or(0.0, |r| 1.0 / r as f64)
}

fn gain(g: u8, kind: Gain) -> f64 {
    match kind {
        Gain::Exponential => 2f64.powi(i32::from(g)) - 1.0,
        Gain::Linear => f64::from(g),
    }
}

pub fn ndcg(inst: &Instance, kind: Gain) -> f64 {
    let discount = |rank: usize| (rank as f64 + 1.0).ln() / 2f64.ln();
    let mut dcg = 0.0;
    for rank in 1..=inst.k.min(inst.run.len()) {
        let g = inst.qrels.get(&inst.run[rank - 1]).copied().unwrap_or(0);
        dcg += gain(g, kind) / discount(rank);
    }
    let mut grades: Vec<u8> = inst.qrels.values().copied().collect();
    grades.sort();
    grades.reverse();
    let mut idcg = 0.0;
    for rank in 1..=inst.k.min(grades.len()) {
        idcg += gain(grades[rank - 1], kind) / discount(rank);
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count(list: &[Vec<String>], gram: &[String]) -> usize {
    list.iter().filter(|g| g.as_slice() == gram).count()
}

/// Corpus BLEU-4 by counting each distinct hypothesis n-gram against every
/// reference; the brevity penalty uses the reference length closest to the
/// hypothesis (shorter wins ties). `None` for an empty corpus.
pub fn bleu4(pairs: &[(String, Vec<String>)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let mut clipped = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (hyp, refs) in pairs {
        let h = words(hyp);
        let rs: Vec<Vec<String>> = refs.iter().map(|x| words(x)).collect();
        c += h.len();
        let mut best = rs[0].len();
        for x in &rs {
            let d = x.len().abs_diff(h.len());
            let bd = best.abs_diff(h.len());
            if d < bd || (d == bd && x.len() < best) {
                best = x.len();
            }
        }
        r += best;
        for n in 1..=4 {
            let hg = grams(&h, n);
            totals[n - 1] += hg.len();
            let mut seen: Vec<Vec<String>> = Vec::new();
            for g in &hg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                let in_hyp = count(&hg, g);
                let in_ref = rs.iter().map(|x| count(&grams(x, n), g)).max().unwrap_or(0);
                clipped[n - 1] += in_hyp.min(in_ref);
            }
        }
    }
    let mut product = 1.0;
    for n in 0..4 {
        if totals[n] == 0 {
            return Some(0.0);
        }
        product *= (clipped[n] as f64 / totals[n] as f64).powf(0.25);
    }
    if c == 0 {
        return Some(0.0);
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Some(bp * product)
}

pub fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

pub fn rouge_l(hyp: &str, refs: &[String]) -> f64 {
    let h = words(hyp);
    let mut best = 0.0f64;
    for r in refs {
        let r = words(r);
        let l = lcs_table(&h, &r) as f64;
        if l > 0.0 {
            let p = l / h.len() as f64;
            let rc = l / r.len() as f64;
            best = best.max(2.0 * p * rc / (p + rc));
        }
    }
    best
}

/// Every hypothesis word, left to right, takes the leftmost free reference
/// word that matches exactly; a second pass does the same on stems.
pub fn meteor_alignment(h: &[String], r: &[String]) -> Vec<(usize, usize)> {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut taken: HashSet<usize> = HashSet::new();
    for stage in 0..2 {
        let key = |w: &String| if stage == 0 { w.clone() } else { porter::stem(w) };
        for (i, hw) in h.iter().enumerate() {
            if map.contains_key(&i) {
                continue;
            }
            for (j, rw) in r.iter().enumerate() {
                if !taken.contains(&j) && key(hw) == key(rw) {
                    map.insert(i, j);
                    taken.insert(j);
                    break;
                }
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = map.into_iter().collect();
    pairs.sort();
    pairs
}

pub fn meteor_lite(hyp: &str, refs: &[String]) -> f64 {
    let h = words(hyp);
    let mut best = 0.0f64;
    for r in refs {
        let r = words(r);
        let a = meteor_alignment(&h, &r);
        let m = a.len() as f64;
        if m == 0.0 {
            continue;
        }
        let mut chunks = 0usize;
        for (i, &(hi, ri)) in a.iter().enumerate() {
            let continues = i > 0 && a[i - 1] == (hi.wrapping_sub(1), ri.wrapping_sub(1));
            if !continues {
                chunks += 1;
            }
        }
        let p = m / h.len() as f64;
        let rc = m / r.len() as f64;
        let fmean = 10.0 * p * rc / (rc + 9.0 * p);
        let penalty = 0.5 * (chunks as f64 / m).powi(3);
        best = best.max(fmean * (1.0 - penalty));
    }
    best
}

/// Hand-built (hypothesis, references) pairs spanning exact matches,
/// reorderings, inflections, repeated words, brevity and no overlap.
pub fn text_pairs() -> Vec<(String, Vec<String>)> {
    let raw: &[(&str, &[&str])] = &[
        ("What are the symptoms of throat cancer?", &["What are the symptoms of throat cancer?"]),
        ("What are its symptoms?", &["What are the symptoms of throat cancer?"]),
        ("Tell me about Lucca's origins.", &["Tell me about the origins of Lucca."]),
        ("What monuments should I visit in Lucca?", &["What monuments should I visit in Lucca?", "Which monuments in Lucca are worth visiting?"]),
        ("the the the the the the the", &["the cat is on the mat", "there is a cat on the mat"]),
        ("the cat sat on the mat", &["the cat sat on the mat"]),
        ("on the mat the cat sat", &["the cat sat on the mat"]),
        ("a cat was sitting on a mat", &["the cat sat on the mat"]),
        ("Is throat cancer treatable?", &["Is throat cancer treatable?", "Can throat cancer be treated?"]),
        ("How is lung cancer different from throat cancer?", &["How is lung cancer different from throat cancer?"]),
        ("What was the first artificial satellite launched into orbit", &["What was the first artificial satellite?"]),
        ("satellite", &["What was the first artificial satellite?"]),
        ("Describe the climate of Lucca in the summer months", &["What is the climate of Lucca like?", "Describe Lucca's climate"]),
        ("running runners ran quickly", &["the runner runs quick", "run"]),
        ("completely unrelated words here", &["nothing shared at all"]),
        ("What did Superstar Billy Graham do when he returned to WWWF?", &["What did Superstar Billy Graham do after returning to the WWWF?"]),
        ("Why was Billy Graham's match with Bruno Sammartino famous", &["Why was the match between Billy Graham and Bruno Sammartino famous?"]),
        ("connection connections connected connecting", &["connect connecting connection"]),
        ("b a d c f e h g", &["a b c d e f g h"]),
        ("a b c d e f g h", &["a b c d e f g h i j k l"]),
        ("the quick brown fox jumps over the lazy dog", &["a quick brown dog jumps over the lazy fox", "the quick brown fox leaps over the lazy dog"]),
        ("When did Sputnik 1 launch and who built it", &["When was Sputnik 1 launched?", "Who built Sputnik 1 and when did it launch?"]),
        ("generalizations of hopefulness", &["generalization and hopeful"]),
        ("one two three four five one two three four five", &["one two three four five"]),
    ];
    raw.iter()
        .map(|(h, rs)| (h.to_string(), rs.iter().map(|r| r.to_string()).collect()))
        .collect()
}

/// A random ranked list over a pool of judged and unjudged ids.
pub fn random_instance(rng: &mut impl rand::Rng) -> Instance {
    use rand::seq::SliceRandom;
    let pool: Vec<String> = (0..rng.gen_range(1..40)).map(|i| format!("p{i}")).collect();
    let mut qrels = HashMap::new();
    for id in &pool {
        if rng.gen_bool(0.6) {
            qrels.insert(id.clone(), rng.gen_range(0..=4u8));
        }
    }
    let mut run = pool.clone();
    run.shuffle(rng);
    run.truncate(rng.gen_range(0..=pool.len()));
    Instance {
        run,
        qrels,
        k: rng.gen_range(1..=12),
    }
}
