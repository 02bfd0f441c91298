//! Seeded synthetic collection with topics and judgments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use convsearch::eval::{Topic, TopicTurn};
use convsearch_core::Passage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tor", "va", "sul", "pe", "dra", "no", "qui", "bel", "sa", "tem", "ul", "fo", "gar", "zi", "mon",
    "eth", "ri", "cal", "dun", "ova",
];

pub struct Synthetic {
    pub passages: Vec<Passage>,
    pub topics: Vec<Topic>,
    pub qrels: String,
}

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Zipf-like pick: low indices are much more frequent.
fn pick<'a>(rng: &mut ChaCha8Rng, vocab: &'a [String]) -> &'a str {
    let u: f64 = rng.gen();
    &vocab[((u * u * u) * vocab.len() as f64) as usize]
}

pub fn generate(passage_count: usize, topic_count: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab: Vec<String> = (0..1500).map(|_| {
        let n = rng.gen_range(2..4);
        word(&mut rng, n)
    }).collect();
    vocab.sort();
    vocab.dedup();
    let entities: Vec<String> = (0..40).map(|_| capitalize(&word(&mut rng, 3))).collect();

    let mut passages = Vec::with_capacity(passage_count);
    let mut by_entity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..passage_count {
        let e = rng.gen_range(0..entities.len());
        by_entity.entry(e).or_default().push(i);
        let mut text = String::new();
        for s in 0..rng.gen_range(3..6) {
            let n = rng.gen_range(8..16);
            let words: Vec<&str> = (0..n).map(|_| pick(&mut rng, &vocab)).collect();
            if s == 0 {
                let _ = write!(text, "{} {}. ", entities[e], words.join(" "));
            } else {
                let _ = write!(text, "{}. ", capitalize(&words.join(" ")));
            }
        }
        let prefix = ["MARCO", "CAR", "WAPO"][i % 3];
        passages.push(Passage::new(format!("{prefix}_{i:05}"), text.trim_end()));
    }

    let mut topics = Vec::new();
    let mut qrels = String::new();
    for t in 0..topic_count {
        let (&e, docs) = by_entity.iter().nth(t % by_entity.len()).expect("entity");
        let name = &entities[e];
        let aspect = |rng: &mut ChaCha8Rng, d: usize| -> String {
            let words: Vec<&str> = passages[d].text.split_whitespace().skip(1).collect();
            words[rng.gen_range(0..words.len())].trim_end_matches('.').to_lowercase()
        };
        let targets: Vec<usize> = (0..3).map(|k| docs[k % docs.len()]).collect();
        let a: Vec<String> = targets.iter().map(|&d| aspect(&mut rng, d)).collect();
        let raws = [
            format!("Tell me about {name} {}.", a[0]),
            format!("What is its {}?", a[1]),
            format!("Where does it {}?", a[2]),
        ];
        let manuals = [
            raws[0].clone(),
            format!("What is {name}'s {}?", a[1]),
            format!("Where does {name} {}?", a[2]),
        ];
        let turns = (0..3)
            .map(|k| {
                let turn_id = format!("{}_{}", t + 1, k + 1);
                for &d in docs {
                    let grade = if d == targets[k] { 4 } else if passages[d].text.to_lowercase().contains(&a[k]) { 3 } else { 1 };
                    let _ = writeln!(qrels, "{turn_id} 0 {} {grade}", passages[d].id);
                }
                TopicTurn {
                    turn_id,
                    raw: raws[k].clone(),
                    manual: Some(manuals[k].clone()),
                }
            })
            .collect();
        topics.push(Topic {
            topic_id: (t + 1).to_string(),
            turns,
        });
    }
    Synthetic { passages, topics, qrels }
}

impl Synthetic {
    pub fn collection_tsv(&self) -> String {
        self.passages.iter().map(|p| format!("{}\t{}\n", p.id, p.text)).collect()
    }

    pub fn topics_jsonl(&self) -> String {
        self.topics.iter().map(|t| serde_json::to_string(t).unwrap() + "\n").collect()
    }
}
