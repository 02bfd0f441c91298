//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p convsearch --test acceptance`.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;
#[path = "support/synthetic.rs"]
mod synthetic;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use convsearch::config::{EndpointConfig, PipelineConfig};
use convsearch::eval::{eval_retrieval, parse_topics, QueryMode};
use convsearch::fixtures;
use convsearch::pipeline::Pipeline;
use convsearch::store;
use convsearch::stub::{spawn_stub, ServerHandle};
use convsearch_core::answer::extractive_baseline;
use convsearch_core::context::{build_rewrite_prompt, fallback_rewrite};
use convsearch_core::index::build_index;
use convsearch_core::metrics::trec::{format_run, parse_qrels, parse_run};
use convsearch_core::metrics::{self, Gain, JudgmentSet, RewritePair};
use convsearch_core::retrieval::{score_bm25, score_lm, search};
use convsearch_core::{AnalyzerConfig, ConversationSession, ConversationTurn, Index, Passage, RetrievalModel, ScoredList};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= TOL, || format!("{what}: {got} vs {want}"))
}

fn to_core(inst: &oracles::Instance) -> (ScoredList, JudgmentSet) {
    let mut j = JudgmentSet::new();
    for (id, &g) in &inst.qrels {
        j.insert("t", id, i64::from(g)).unwrap();
    }
    let n = inst.run.len();
    let scored = inst.run.iter().enumerate().map(|(i, id)| (id.clone(), (n - i) as f64)).collect();
    (ScoredList::from_ordered("t", scored), j)
}

fn metric_oracles() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for n in 0..1000 {
        let inst = oracles::random_instance(&mut rng);
        let (run, j) = to_core(&inst);
        let mut pairs = Vec::new();
        for t in [1, 2] {
            pairs.push((metrics::precision_at_k(&run, &j, inst.k, t), oracles::precision(&inst, t), "P@k"));
            pairs.push((metrics::recall(&run, &j, t), oracles::recall(&inst, t), "Recall"));
            pairs.push((metrics::average_precision(&run, &j, t), oracles::average_precision(&inst, t), "MAP"));
            pairs.push((metrics::reciprocal_rank(&run, &j, t), oracles::reciprocal_rank(&inst, t), "MRR"));
        }
        for gain in [Gain::Exponential, Gain::Linear] {
            pairs.push((metrics::ndcg_at_k(&run, &j, inst.k, gain), oracles::ndcg(&inst, gain), "nDCG@k"));
        }
        for (got, want, what) in pairs {
            worst = worst.max((got - want).abs());
            close(got, want, &format!("instance {n} {what}"))?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances, max |d| = {worst:.1e}, {:.2} s", elapsed.as_secs_f64()))
}

fn text_oracles() -> Check {
    let pairs = oracles::text_pairs();
    ensure(pairs.len() >= 20, || format!("only {} pairs", pairs.len()))?;
    for (hyp, refs) in &pairs {
        let pair = RewritePair {
            turn_id: "t".into(),
            hypothesis: hyp.clone(),
            references: refs.clone(),
        };
        let single = [(hyp.clone(), refs.clone())];
        let bleu = metrics::bleu4(&[pair]).map_err(|e| e.to_string())?;
        close(bleu, oracles::bleu4(&single).unwrap(), &format!("bleu4 {hyp:?}"))?;
        close(metrics::rouge_l(hyp, refs), oracles::rouge_l(hyp, refs), &format!("rouge_l {hyp:?}"))?;
        close(metrics::meteor_lite(hyp, refs), oracles::meteor_lite(hyp, refs), &format!("meteor_lite {hyp:?}"))?;
    }
    let corpus: Vec<RewritePair> = pairs
        .iter()
        .map(|(h, r)| RewritePair {
            turn_id: "t".into(),
            hypothesis: h.clone(),
            references: r.clone(),
        })
        .collect();
    close(metrics::bleu4(&corpus).unwrap(), oracles::bleu4(&pairs).unwrap(), "corpus bleu4")?;
    Ok(format!("{} pairs per metric plus corpus BLEU", pairs.len()))
}

const VOCAB: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

fn plain_index(docs: &[Vec<&str>]) -> Index {
    build_index(
        docs.iter().enumerate().map(|(i, d)| Passage::new(format!("d{i}"), d.join(" "))),
        AnalyzerConfig::plain(),
    )
    .unwrap()
}

fn random_doc(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    (0..rng.gen_range(1..12)).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect()
}

fn retrieval_closed_forms() -> Check {
    let toy = build_index(
        [Passage::new("d1", "a b a"), Passage::new("d2", "b c"), Passage::new("d3", "a")],
        AnalyzerConfig::plain(),
    )
    .unwrap();
    let t = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let bm25 = RetrievalModel::bm25();
    // N = 3, avgdl = 2, df(a) = 2, df(b) = 2, df(c) = 1.
    let idf = |df: f64| (1.0 + (3.0 - df + 0.5) / (df + 0.5)).ln();
    let bm = |tf: f64, dl: f64, df: f64| idf(df) * tf * 1.9 / (tf + 0.9 * (0.6 + 0.4 * dl / 2.0));
    close(score_bm25(&t(&["a"]), 0, &toy, &bm25), bm(2.0, 3.0, 2.0), "bm25 a d1")?;
    close(score_bm25(&t(&["a", "b"]), 0, &toy, &bm25), bm(2.0, 3.0, 2.0) + bm(1.0, 3.0, 2.0), "bm25 a b d1")?;
    close(score_bm25(&t(&["c"]), 1, &toy, &bm25), bm(1.0, 2.0, 1.0), "bm25 c d2")?;
    close(score_bm25(&t(&["a"]), 2, &toy, &bm25), bm(1.0, 1.0, 2.0), "bm25 a d3")?;
    let lmd = RetrievalModel::lmd();
    // |C| = 6, cf(a) = 3, cf(b) = 2, cf(c) = 1.
    let dir = |tf: f64, dl: f64, cf: f64| ((tf + 1000.0 * cf / 6.0) / (dl + 1000.0)).ln();
    close(score_lm(&t(&["a"]), 0, &toy, &lmd), dir(2.0, 3.0, 3.0), "lmd a d1")?;
    close(score_lm(&t(&["a"]), 2, &toy, &lmd), dir(1.0, 1.0, 3.0), "lmd a d3")?;
    close(score_lm(&t(&["a", "c"]), 1, &toy, &lmd), dir(0.0, 2.0, 3.0) + dir(1.0, 2.0, 1.0), "lmd a c d2")?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 10_000 {
        let mut docs: Vec<Vec<&str>> = (0..rng.gen_range(1..8)).map(|_| random_doc(&mut rng)).collect();
        let query: Vec<String> = (0..rng.gen_range(1..4)).map(|_| VOCAB[rng.gen_range(0..6)].to_string()).collect();
        let target = rng.gen_range(0..docs.len());
        docs[target].push(["g", "h"][rng.gen_range(0..2)]);
        let Some(slot) = docs[target].iter().position(|w| !query.iter().any(|q| q == w)) else {
            continue;
        };
        let term = query[rng.gen_range(0..query.len())].clone();
        let before = score_bm25(&query, target as u32, &plain_index(&docs), &bm25);
        let mut grown = docs.clone();
        grown[target][slot] = &term;
        let after = score_bm25(&query, target as u32, &plain_index(&grown), &bm25);
        ensure(after >= before, || format!("{query:?} {:?}: {before} -> {after}", docs[target]))?;
        checked += 1;
    }

    // Informational: appending (which also lengthens the document).
    let mut drops = 0;
    for _ in 0..10_000 {
        let docs: Vec<Vec<&str>> = (0..rng.gen_range(1..8)).map(|_| random_doc(&mut rng)).collect();
        let query: Vec<String> = (0..rng.gen_range(1..4)).map(|_| VOCAB[rng.gen_range(0..8)].to_string()).collect();
        let target = rng.gen_range(0..docs.len());
        let term = query[rng.gen_range(0..query.len())].clone();
        let before = score_bm25(&query, target as u32, &plain_index(&docs), &bm25);
        let mut grown = docs.clone();
        grown[target].push(&term);
        drops += usize::from(score_bm25(&query, target as u32, &plain_index(&grown), &bm25) < before);
    }
    Ok(format!(
        "closed forms exact; 10000 length-preserving additions never lower the score (appending: {drops}/10000 multi-term drops)"
    ))
}

fn prompt_goldens() -> Check {
    let mut graham = ConversationSession::from_queries("s", &["Superstar Billy Graham. Return to WWWF (1977-1981)"]);
    graham
        .append(ConversationTurn {
            turn_number: 2,
            raw_query: "Why did he return to the WWWF?".into(),
            rewritten_query: None,
            top_passage: Some(Passage::new("p", "An agreement with promoter Vincent J. McMahon Senior.")),
            answer: None,
        })
        .unwrap();
    let cases = [
        (
            graham,
            "What was his agreement with McMahon?",
            "What was his agreement with McMahon? [CTX] Superstar Billy Graham. Return to WWWF (1977-1981) [TURN] Why did he return to the WWWF? An agreement with promoter Vincent J. McMahon Senior.",
        ),
        (
            ConversationSession::from_queries("s", &["What is throat cancer?", "Is throat cancer treatable?", "Tell me about lung cancer."]),
            "What are its symptoms?",
            "What are its symptoms? [CTX] What is throat cancer? [TURN] Is throat cancer treatable? [TURN] Tell me about lung cancer.",
        ),
        (
            ConversationSession::from_queries(
                "s",
                &["Tell me about the Bronze Age collapse?", "What is the evidence for the Bronze Age collapse?"],
            ),
            "What are some of the possible causes?",
            "What are some of the possible causes? [CTX] Tell me about the Bronze Age collapse? [TURN] What is the evidence for the Bronze Age collapse?",
        ),
    ];
    for (session, query, expected) in &cases {
        let got = build_rewrite_prompt(session, query).text;
        ensure(got == *expected, || format!("got {got:?}"))?;
    }
    Ok("3 example prompts byte-identical".into())
}

fn lucca_fallback() -> Check {
    let script = fixtures::LUCCA_SCRIPT;
    let targets = [script[0], "Tell me about Lucca's origins.", "What monuments should I visit in Lucca?"];
    for i in 0..3 {
        let session = ConversationSession::from_queries("lucca", &script[..i]);
        let got = fallback_rewrite(&session, script[i]);
        ensure(got == targets[i], || format!("turn {}: {got:?}", i + 1))?;
    }
    // The same through the full pipeline with no backends configured.
    let pipeline = Pipeline::new(Arc::new(fixtures::lucca_index()), PipelineConfig::default());
    let mut session = ConversationSession::new("lucca");
    for (q, want) in script.iter().zip(targets) {
        let r = pipeline.process_turn(&mut session, q).map_err(|e| e.to_string())?;
        ensure(r.rewritten_query == want, || format!("pipeline: {:?}", r.rewritten_query))?;
        ensure(!r.ranked.is_empty(), || format!("no results for {want:?}"))?;
    }
    Ok("turn 1 pass-through, turns 2 and 3 match targets".into())
}

fn with_stub(config: &mut PipelineConfig, stub: &ServerHandle, rerank: bool, summarize: bool) {
    let endpoint = EndpointConfig {
        base_url: stub.url(),
        ..EndpointConfig::default()
    };
    config.backends.rewriter = Some(endpoint.clone());
    if rerank {
        config.backends.reranker = Some(endpoint.clone());
    }
    if summarize {
        config.backends.summarizer = Some(endpoint);
    }
}

fn rerank_invariance() -> Check {
    let topics = parse_topics(fixtures::COREF_TOPICS).map_err(|e| e.to_string())?;
    let qrels = parse_qrels(fixtures::COREF_QRELS).map_err(|e| e.to_string())?;
    let stub = spawn_stub("127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())?;
    let mut stubbed = PipelineConfig::default();
    with_stub(&mut stubbed, &stub, true, false);
    let scorers = [("fallback", PipelineConfig::default()), ("stub", stubbed)];
    let mut lists = 0;
    for (name, config) in scorers {
        let pipeline = Pipeline::new(Arc::new(fixtures::coref_index()), config);
        for mode in [QueryMode::Raw, QueryMode::Rewritten, QueryMode::Manual] {
            let plain = eval_retrieval(&pipeline, &topics, &qrels, mode, false).map_err(|e| e.to_string())?;
            let reranked = eval_retrieval(&pipeline, &topics, &qrels, mode, true).map_err(|e| e.to_string())?;
            for (a, b) in plain.runs.iter().zip(&reranked.runs) {
                let sa: BTreeSet<&str> = a.ids().collect();
                let sb: BTreeSet<&str> = b.ids().collect();
                ensure(sa == sb && a.len() == b.len(), || format!("{name} {mode:?} {}: not a permutation", a.turn_id))?;
                let ranks: Vec<usize> = b.entries.iter().map(|e| e.rank).collect();
                ensure(ranks == (1..=b.len()).collect::<Vec<_>>(), || format!("{}: ranks {ranks:?}", b.turn_id))?;
                lists += 1;
            }
            let (r0, r1) = (plain.report.aggregate["Recall"], reranked.report.aggregate["Recall"]);
            ensure(r0 == r1, || format!("{name} {mode:?}: Recall {r0} vs {r1}"))?;
        }
    }
    Ok(format!("{lists} re-ranked lists are permutations; full-depth Recall unchanged for both scorers"))
}

fn rewrite_benefit() -> Check {
    let topics = parse_topics(fixtures::COREF_TOPICS).map_err(|e| e.to_string())?;
    let qrels = parse_qrels(fixtures::COREF_QRELS).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(Arc::new(fixtures::coref_index()), PipelineConfig::default());
    let ndcg = |mode| {
        eval_retrieval(&pipeline, &topics, &qrels, mode, false)
            .map(|r| r.report.aggregate["nDCG@3"])
            .map_err(|e| e.to_string())
    };
    let (raw, rewritten) = (ndcg(QueryMode::Raw)?, ndcg(QueryMode::Rewritten)?);
    ensure(rewritten > raw, || format!("raw {raw:.4} rewritten {rewritten:.4}"))?;
    Ok(format!("nDCG@3 raw {raw:.4} < rewritten {rewritten:.4}"))
}

fn baseline_contract() -> Check {
    let topics = parse_topics(fixtures::COREF_TOPICS).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(Arc::new(fixtures::coref_index()), PipelineConfig::default());
    let synthetic = synthetic::generate(300, 5, 11);
    let synth_index = build_index(synthetic.passages.clone(), AnalyzerConfig::default()).unwrap();
    let synth = Pipeline::new(Arc::new(synth_index), PipelineConfig::default());
    let mut cases = Vec::new();
    for (p, ts) in [(&pipeline, &topics), (&synth, &synthetic.topics)] {
        for t in ts.iter().flat_map(|t| &t.turns) {
            let list = p.retrieve(&t.turn_id, t.manual.as_ref().unwrap(), 50, None).map_err(|e| e.to_string())?.list;
            cases.push((p, list));
        }
    }
    let mut checked = 0;
    for (p, list) in &cases {
        let text_of = |id: &str| p.index().passage_by_id(id).map(|x| x.text.as_str());
        let source: Vec<&str> = list
            .ids()
            .take(3)
            .filter_map(text_of)
            .flat_map(str::split_whitespace)
            .collect();
        let mut previous = 0;
        for min in 20..=120 {
            let out = extractive_baseline(list, text_of, min).text;
            let words: Vec<&str> = out.split_whitespace().collect();
            let n = words.len();
            ensure(n <= source.len() && words[..] == source[..n], || format!("not a prefix: {out:?}"))?;
            ensure(n == source.len() || words[n - 1].ends_with(['.', '!', '?']), || format!("cut mid-sentence: {out:?}"))?;
            ensure(n >= min.min(source.len()), || format!("{n} words for min {min}"))?;
            ensure(n >= previous, || format!("shrank at min {min}"))?;
            previous = n;
            checked += 1;
        }
    }
    Ok(format!("{} ranked lists x 101 lengths ({checked} answers)", cases.len()))
}

fn cli(args: &[&str], env: &[(&str, &str)]) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_convsearch"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn determinism_and_scale() -> Check {
    let stub = spawn_stub("127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())?;
    let url = stub.url();
    let env = [("REWRITER_URL", url.as_str()), ("RERANKER_URL", url.as_str()), ("SUMMARIZER_URL", url.as_str())];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let data = synthetic::generate(1000, 5, 5);
    let write = |name: &str, text: &str| std::fs::write(d.join(name), text).map_err(|e| e.to_string());
    write("collection.tsv", &data.collection_tsv())?;
    write("topics.jsonl", &data.topics_jsonl())?;
    write("qrels.txt", &data.qrels)?;
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();

    let started = Instant::now();
    cli(&["index", "build", "--input", &p("collection.tsv"), "--out", &p("idx")], &env)?;
    let mut outputs = Vec::new();
    for round in 0..2 {
        let (run, report, answers) = (p(&format!("run{round}")), p(&format!("report{round}")), p(&format!("answers{round}")));
        let common = ["--index", &p("idx"), "--topics", &p("topics.jsonl"), "--qrels", &p("qrels.txt")];
        let mut args = vec!["eval", "retrieval", "--mode", "rewritten", "--rerank", "--run", &run, "--report", &report];
        args.extend(common);
        cli(&args, &env)?;
        let mut args = vec!["eval", "answers", "--out", &answers];
        args.extend(common);
        cli(&args, &env)?;
        let read = |f: &str| std::fs::read(f).map_err(|e| e.to_string());
        outputs.push((read(&run)?, read(&report)?, read(&answers)?));
    }
    let elapsed = started.elapsed();
    ensure(outputs[0] == outputs[1], || "outputs differ between runs".into())?;
    let answers = String::from_utf8_lossy(&outputs[0].2);
    ensure(answers.contains("\nabstractive\t"), || "no abstractive rows".into())?;
    ensure(elapsed < Duration::from_secs(60), || format!("1k pipeline took {elapsed:?}"))?;

    // Interactive turns over the same corpus through the stub.
    let index = store::load(&d.join("idx")).map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::default();
    with_stub(&mut config, &stub, true, true);
    let pipeline = Pipeline::new(Arc::new(index), config);
    let turns_started = Instant::now();
    let mut turns = 0;
    for topic in &data.topics {
        let mut session = ConversationSession::new(topic.topic_id.clone());
        for t in &topic.turns {
            let r = pipeline.process_turn(&mut session, &t.raw).map_err(|e| e.to_string())?;
            ensure(r.degraded_flags.is_empty(), || format!("degraded {:?}", r.degraded_flags))?;
            turns += 1;
        }
    }
    let total = started.elapsed();
    ensure(total < Duration::from_secs(60), || format!("took {total:?}"))?;
    Ok(format!(
        "run file, report and answer table byte-identical across 2 runs; 1000 passages: build + 2x(eval retrieval + eval answers) {:.2} s, {turns} live turns {:.2} s",
        elapsed.as_secs_f64(),
        turns_started.elapsed().as_secs_f64()
    ))
}

fn persistence() -> Check {
    let data = synthetic::generate(1000, 1, 9);
    let index = build_index(data.passages.clone(), AnalyzerConfig::default()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    store::save(&index, dir.path()).map_err(|e| e.to_string())?;
    let loaded = store::load(dir.path()).map_err(|e| e.to_string())?;
    ensure(loaded.stats() == index.stats(), || "stats differ".into())?;
    let terms: Vec<&str> = index.terms().collect();
    ensure(terms == loaded.terms().collect::<Vec<_>>(), || "vocabularies differ".into())?;
    for t in &terms {
        ensure(index.postings(t) == loaded.postings(t), || format!("postings of {t:?} differ"))?;
        ensure(index.collection_frequency(t) == loaded.collection_frequency(t), || format!("cf of {t:?}"))?;
    }
    ensure(index.passages() == loaded.passages(), || "passages differ".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut lists = Vec::new();
    for q in 0..100 {
        let words: Vec<&str> = (0..rng.gen_range(1..5)).map(|_| terms[rng.gen_range(0..terms.len())]).collect();
        let query = words.join(" ");
        let model = [RetrievalModel::bm25(), RetrievalModel::lmd(), RetrievalModel::lmjm()][q % 3];
        let a = search(&index, &format!("q{q}"), &query, &model, 100).map_err(|e| e.to_string())?;
        let b = search(&loaded, &format!("q{q}"), &query, &model, 100).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("results differ for {query:?}"))?;
        lists.push(a);
    }
    let text = format_run(&lists, "persist");
    let path = dir.path().join("run.txt");
    std::fs::write(&path, &text).map_err(|e| e.to_string())?;
    let reread = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let parsed = parse_run(&reread).map_err(|e| e.to_string())?;
    ensure(format_run(&parsed.lists, &parsed.tag) == text, || "run file changed on round trip".into())?;
    Ok(format!(
        "{} terms, {} passages, 100 queries identical; run file ({} lines) byte-identical",
        terms.len(),
        index.doc_count(),
        text.lines().count()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric-oracles", metric_oracles),
        ("text-metric-oracles", text_oracles),
        ("retrieval-closed-forms", retrieval_closed_forms),
        ("prompt-goldens", prompt_goldens),
        ("rewrite-fallback", lucca_fallback),
        ("rerank-permutation-recall", rerank_invariance),
        ("rewrite-benefit", rewrite_benefit),
        ("baseline-contract", baseline_contract),
        ("end-to-end-determinism", determinism_and_scale),
        ("persistence", persistence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
