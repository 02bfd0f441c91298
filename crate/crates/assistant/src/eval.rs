//! Batch evaluation over topics files, qrels and rewrite records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::thread;

use convsearch_core::answer::{build_summarizer_input, extractive_baseline, generate_answer, AnswerError};
use convsearch_core::context::{rewrite, ContextError};
use convsearch_core::metrics::{bleu4, evaluate_runs, meteor_lite, rouge_l, MetricError};
use convsearch_core::{
    ConversationSession, ConversationTurn, GenerationParams, JudgmentSet, MetricReport, Passage, RewritePair, RewriterBackend,
    ScoredList,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Pipeline, PipelineError};

/// Minimum grade of a passage used as an answer reference.
pub const REFERENCE_GRADE: u8 = 3;
pub const DEFAULT_SWEEP: [usize; 6] = [20, 40, 60, 80, 100, 120];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("turn {0} has no manual rewrite")]
    MissingManual(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<ContextError> for EvalError {
    fn from(e: ContextError) -> Self {
        Self::Pipeline(e.into())
    }
}

impl From<AnswerError> for EvalError {
    fn from(e: AnswerError) -> Self {
        Self::Pipeline(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicTurn {
    pub turn_id: String,
    pub raw: String,
    #[serde(default)]
    pub manual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub turns: Vec<TopicTurn>,
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn parse_topics(text: &str) -> Result<Vec<Topic>, EvalError> {
    parse_lines(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Raw,
    Rewritten,
    Manual,
}

/// The query each turn is searched with in `mode`, in topic order.
pub fn turn_queries(pipeline: &Pipeline, topic: &Topic, mode: QueryMode) -> Result<Vec<String>, EvalError> {
    match mode {
        QueryMode::Raw => Ok(topic.turns.iter().map(|t| t.raw.clone()).collect()),
        QueryMode::Manual => topic
            .turns
            .iter()
            .map(|t| t.manual.clone().ok_or_else(|| EvalError::MissingManual(t.turn_id.clone())))
            .collect(),
        QueryMode::Rewritten => {
            let mut session = ConversationSession::new(topic.topic_id.clone());
            topic
                .turns
                .iter()
                .map(|t| {
                    let out = rewrite(&session, &t.raw, pipeline.rewriter(), pipeline.config().fallback.rewrite)?;
                    let top = top_passage(pipeline, &t.turn_id, &out.text);
                    session
                        .append(ConversationTurn {
                            turn_number: session.next_turn_number(),
                            raw_query: t.raw.clone(),
                            rewritten_query: Some(out.text.clone()),
                            top_passage: top,
                            answer: None,
                        })
                        .map_err(PipelineError::from)?;
                    Ok(out.text)
                })
                .collect()
        }
    }
}

/// Top-1 of the first-stage ranking, recorded for later prompts.
fn top_passage(pipeline: &Pipeline, turn_id: &str, query: &str) -> Option<Passage> {
    let ranking = pipeline.retrieve(turn_id, query, 1, None).ok()?;
    let id = ranking.list.ids().next()?.to_string();
    pipeline.index().passage_by_id(&id).cloned()
}

/// Runs `f` for every topic on scoped threads; output keeps topic order.
fn per_topic<T: Send>(
    topics: &[Topic],
    f: impl Fn(&Topic) -> Result<T, EvalError> + Sync,
) -> Result<Vec<T>, EvalError> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(topics.len().max(1));
    let chunk = topics.len().div_ceil(workers).max(1);
    let f = &f;
    let chunks: Vec<Result<Vec<T>, EvalError>> = thread::scope(|s| {
        let handles: Vec<_> = topics
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Result<Vec<T>, EvalError>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("eval worker")).collect()
    });
    let mut out = Vec::with_capacity(topics.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalEval {
    /// One list per topic turn, sorted by turn id.
    pub runs: Vec<ScoredList>,
    pub report: MetricReport,
    pub rerank_degraded_turns: usize,
}

pub fn eval_retrieval(
    pipeline: &Pipeline,
    topics: &[Topic],
    judgments: &JudgmentSet,
    mode: QueryMode,
    rerank: bool,
) -> Result<RetrievalEval, EvalError> {
    let settings = &pipeline.config().eval;
    let depth = rerank.then_some(settings.rerank_depth);
    let per_topic_runs = per_topic(topics, |topic| {
        let queries = turn_queries(pipeline, topic, mode)?;
        topic
            .turns
            .iter()
            .zip(queries)
            .map(|(t, q)| {
                let ranking = match pipeline.retrieve(&t.turn_id, &q, settings.first_stage_k, depth) {
                    Err(PipelineError::Retrieval(convsearch_core::retrieval::RetrievalError::EmptyQueryAfterAnalysis)) => {
                        return Ok((ScoredList::from_ordered(t.turn_id.clone(), Vec::new()), false))
                    }
                    other => other?,
                };
                Ok((ranking.list, ranking.rerank_degraded))
            })
            .collect::<Result<Vec<_>, EvalError>>()
    })?;
    let mut runs = Vec::new();
    let mut degraded = 0;
    for (list, d) in per_topic_runs.into_iter().flatten() {
        degraded += usize::from(d);
        runs.push(list);
    }
    runs.sort_by(|a, b| a.turn_id.cmp(&b.turn_id));
    let report = evaluate_runs(&runs, judgments, &settings.metrics);
    Ok(RetrievalEval {
        runs,
        report,
        rerank_degraded_turns: degraded,
    })
}

/// One history entry: a bare query or a query with its passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistoryEntry {
    Query(String),
    Turn {
        query: String,
        #[serde(default)]
        passage: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Targets {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRecord {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
    pub query: String,
    pub target: Targets,
}

impl RewriteRecord {
    pub fn session(&self) -> ConversationSession {
        let mut session = ConversationSession::new(self.id.clone().unwrap_or_default());
        for h in &self.history {
            let (query, passage) = match h {
                HistoryEntry::Query(q) => (q, None),
                HistoryEntry::Turn { query, passage } => (query, passage.as_ref()),
            };
            let turn_number = session.next_turn_number();
            session
                .append(ConversationTurn {
                    turn_number,
                    raw_query: query.clone(),
                    rewritten_query: None,
                    top_passage: passage.map(|p| Passage::new(format!("h{turn_number}"), p.clone())),
                    answer: None,
                })
                .expect("sequential turns");
        }
        session
    }

    pub fn references(&self) -> Vec<String> {
        match &self.target {
            Targets::One(t) => vec![t.clone()],
            Targets::Many(ts) => ts.clone(),
        }
    }
}

pub fn parse_rewrite_records(text: &str) -> Result<Vec<RewriteRecord>, EvalError> {
    parse_lines(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteEval {
    /// Corpus BLEU-4 in `[0, 1]`.
    pub bleu: f64,
    pub pairs: Vec<RewritePair>,
    pub degraded: usize,
}

impl RewriteEval {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("record\thypothesis\treference\n");
        for p in &self.pairs {
            let _ = writeln!(out, "{}\t{}\t{}", p.turn_id, p.hypothesis, p.references.join(" | "));
        }
        let _ = writeln!(out, "BLEU-4\t{:.2}", self.bleu * 100.0);
        out
    }
}

pub fn eval_rewrites(records: &[RewriteRecord], backend: &dyn RewriterBackend, fallback: bool) -> Result<RewriteEval, EvalError> {
    let mut pairs = Vec::with_capacity(records.len());
    let mut degraded = 0;
    for (i, r) in records.iter().enumerate() {
        let out = rewrite(&r.session(), &r.query, backend, fallback)?;
        degraded += usize::from(out.degraded);
        pairs.push(RewritePair {
            turn_id: r.id.clone().unwrap_or_else(|| (i + 1).to_string()),
            hypothesis: out.text,
            references: r.references(),
        });
    }
    let bleu = bleu4(&pairs)?;
    Ok(RewriteEval { bleu, pairs, degraded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Abstractive,
    ExtractiveBaseline,
}

impl GeneratorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Abstractive => "abstractive",
            Self::ExtractiveBaseline => "extractive_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub mode: GeneratorMode,
    pub min_length: usize,
    pub rouge_l: f64,
    pub meteor: f64,
    pub turns: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnswerTable {
    pub rows: Vec<AnswerRow>,
}

impl AnswerTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("mode\tmin_length\tROUGE-L\tMETEOR\tturns\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{}",
                r.mode.as_str(),
                r.min_length,
                r.rouge_l,
                r.meteor,
                r.turns
            );
        }
        out
    }

    pub fn row(&self, mode: GeneratorMode, min_length: usize) -> Option<&AnswerRow> {
        self.rows.iter().find(|r| r.mode == mode && r.min_length == min_length)
    }
}

/// Per-turn generated texts, keyed by (mode, min_length).
type TurnAnswers = BTreeMap<(GeneratorMode, usize), String>;

/// Scores baseline (and, when a summarizer is configured, abstractive)
/// answers against the grade-3/4 passages of every judged turn.
///
/// Queries are the manual rewrites when present, otherwise the pipeline
/// rewrite.
pub fn eval_answers(
    pipeline: &Pipeline,
    topics: &[Topic],
    judgments: &JudgmentSet,
    sweep: &[usize],
) -> Result<AnswerTable, EvalError> {
    let settings = &pipeline.config().eval;
    let depth = pipeline.config().rerank.then_some(settings.rerank_depth);
    let abstractive = pipeline.summarizer_configured();
    let per_topic_rows = per_topic(topics, |topic| {
        let rewritten = if topic.turns.iter().all(|t| t.manual.is_some()) {
            None
        } else {
            Some(turn_queries(pipeline, topic, QueryMode::Rewritten)?)
        };
        let mut scored: Vec<(Vec<String>, TurnAnswers)> = Vec::new();
        for (i, t) in topic.turns.iter().enumerate() {
            let references: Vec<String> = judgments
                .passages_at_least(&t.turn_id, REFERENCE_GRADE)
                .into_iter()
                .filter_map(|id| pipeline.index().passage_by_id(id).map(|p| p.text.clone()))
                .collect();
            if references.is_empty() {
                continue;
            }
            let query = match (&t.manual, &rewritten) {
                (Some(m), _) => m.clone(),
                (None, Some(r)) => r[i].clone(),
                (None, None) => unreachable!("rewrites computed when a manual query is missing"),
            };
            let ranking = match pipeline.retrieve(&t.turn_id, &query, pipeline.config().first_stage_k, depth) {
                Ok(r) => r,
                Err(PipelineError::Retrieval(convsearch_core::retrieval::RetrievalError::EmptyQueryAfterAnalysis)) => {
                    continue
                }
                Err(e) => return Err(e.into()),
            };
            if ranking.list.is_empty() {
                continue;
            }
            let text_of = |id: &str| pipeline.index().passage_by_id(id).map(|p| p.text.as_str());
            let mut answers = TurnAnswers::new();
            for &min in sweep {
                let base = extractive_baseline(&ranking.list, text_of, min);
                answers.insert((GeneratorMode::ExtractiveBaseline, min), base.text);
                if abstractive {
                    let params = GenerationParams {
                        min_length_words: min,
                        ..pipeline.config().generation
                    };
                    let n = params.top_n_passages;
                    let input = build_summarizer_input(&ranking.list, text_of, n);
                    let ids = ranking.list.ids().take(n).map(str::to_string).collect();
                    let answer = generate_answer(&input, &params, pipeline.summarizer(), false, ids)?;
                    answers.insert((GeneratorMode::Abstractive, min), answer.text);
                }
            }
            scored.push((references, answers));
        }
        Ok(scored)
    })?;

    let mut sums: BTreeMap<(GeneratorMode, usize), (f64, f64, usize)> = BTreeMap::new();
    for (references, answers) in per_topic_rows.iter().flatten() {
        for (key, text) in answers {
            let e = sums.entry(*key).or_default();
            e.0 += rouge_l(text, references);
            e.1 += meteor_lite(text, references);
            e.2 += 1;
        }
    }
    let rows = sums
        .into_iter()
        .map(|((mode, min_length), (r, m, n))| AnswerRow {
            mode,
            min_length,
            rouge_l: r / n as f64,
            meteor: m / n as f64,
            turns: n,
        })
        .collect();
    Ok(AnswerTable { rows })
}
