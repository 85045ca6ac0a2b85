//! Dataset loading, evaluation corpora, answer metrics and reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acmg::GranularityLevel;
use crate::corpus::{CorpusError, Document, DocumentStore};
use crate::distill::{record_trajectory, Trajectory};
use crate::ici::StopReason;
use crate::pipeline::{AnswerTimings, Pipeline, PipelineError};

/// Distractors kept per question for the single-passage datasets.
pub const MAX_DPR_DISTRACTORS: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unexpected layout at {pointer}: {message}")]
    Layout { path: String, pointer: String, message: String },
    #[error("example {example}: paragraph {paragraph} is not in the dataset")]
    DanglingReference { example: String, paragraph: String },
    #[error("duplicate example id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot write report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Hotpotqa,
    Twowiki,
    Musique,
    Nq,
    Webq,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hotpotqa" => Ok(Self::Hotpotqa),
            "twowiki" | "2wikimqa" | "2wikimultihopqa" => Ok(Self::Twowiki),
            "musique" => Ok(Self::Musique),
            "nq" => Ok(Self::Nq),
            "webq" | "webqa" => Ok(Self::Webq),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

impl DatasetFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hotpotqa => "hotpotqa",
            Self::Twowiki => "twowiki",
            Self::Musique => "musique",
            Self::Nq => "nq",
            Self::Webq => "webq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub supporting_doc_ids: Vec<String>,
    pub distractor_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub title: String,
    pub text: String,
}

/// Stable id of a paragraph: hash of its title and text.
pub fn paragraph_id(title: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(title.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    format!("p{}", hex::encode(&h.finalize()[..8]))
}

/// Examples plus the paragraphs they reference, keyed by [`paragraph_id`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<QAExample>,
    pub paragraphs: BTreeMap<String, Paragraph>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Registers a paragraph and returns its id.
    pub fn add_paragraph(&mut self, title: &str, text: &str) -> String {
        let id = paragraph_id(title, text);
        self.paragraphs.entry(id.clone()).or_insert_with(|| Paragraph {
            title: title.to_owned(),
            text: text.to_owned(),
        });
        id
    }

    /// Deterministic sample of `n` examples (seeded shuffle). Unreferenced
    /// paragraphs are dropped.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let mut idx: Vec<usize> = (0..self.examples.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let examples: Vec<QAExample> = idx.into_iter().take(n).map(|i| self.examples[i].clone()).collect();
        let paragraphs = examples
            .iter()
            .flat_map(|e| e.supporting_doc_ids.iter().chain(&e.distractor_doc_ids))
            .filter_map(|id| self.paragraphs.get(id).map(|p| (id.clone(), p.clone())))
            .collect();
        Dataset { examples, paragraphs }
    }
}

struct Cursor<'a> {
    path: &'a str,
}

impl Cursor<'_> {
    fn err(&self, pointer: &str, message: impl Into<String>) -> EvalError {
        EvalError::Layout {
            path: self.path.to_owned(),
            pointer: pointer.to_owned(),
            message: message.into(),
        }
    }

    fn field<'v>(&self, v: &'v Value, ptr: &str, key: &str) -> Result<&'v Value, EvalError> {
        v.get(key).ok_or_else(|| self.err(ptr, format!("missing field {key:?}")))
    }

    fn str_field(&self, v: &Value, ptr: &str, key: &str) -> Result<String, EvalError> {
        match self.field(v, ptr, key)? {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(self.err(&format!("{ptr}/{key}"), "expected a string")),
        }
    }

    fn array<'v>(&self, v: &'v Value, ptr: &str) -> Result<&'v Vec<Value>, EvalError> {
        v.as_array().ok_or_else(|| self.err(ptr, "expected an array"))
    }
}

fn parse_records(text: &str, cur: &Cursor<'_>) -> Result<Vec<Value>, EvalError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let v: Value = serde_json::from_str(text).map_err(|e| cur.err("", e.to_string()))?;
        return Ok(cur.array(&v, "")?.clone());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| cur.err(&format!("line {}", i + 1), e.to_string())))
        .collect()
}

/// HotpotQA and 2WikiMultihopQA share one layout: `context` is a list of
/// `[title, [sentences]]` and `supporting_facts` names titles.
fn load_wiki_style(records: &[Value], cur: &Cursor<'_>, ds: &mut Dataset) -> Result<(), EvalError> {
    for (i, r) in records.iter().enumerate() {
        let ptr = format!("/{i}");
        let id = cur.str_field(r, &ptr, "_id").or_else(|_| cur.str_field(r, &ptr, "id"))?;
        let question = cur.str_field(r, &ptr, "question")?;
        let answer = cur.str_field(r, &ptr, "answer")?;
        let support_titles: Vec<String> = cur
            .array(cur.field(r, &ptr, "supporting_facts")?, &format!("{ptr}/supporting_facts"))?
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.get(0)
                    .and_then(Value::as_str)
                    .map(str::to_owned)
                    .ok_or_else(|| cur.err(&format!("{ptr}/supporting_facts/{j}"), "expected [title, index]"))
            })
            .collect::<Result<_, _>>()?;
        let mut support = Vec::new();
        let mut distract = Vec::new();
        let ctx_ptr = format!("{ptr}/context");
        for (j, c) in cur.array(cur.field(r, &ptr, "context")?, &ctx_ptr)?.iter().enumerate() {
            let pptr = format!("{ctx_ptr}/{j}");
            let title = c
                .get(0)
                .and_then(Value::as_str)
                .ok_or_else(|| cur.err(&pptr, "expected [title, sentences]"))?;
            let sents = c
                .get(1)
                .and_then(Value::as_array)
                .ok_or_else(|| cur.err(&pptr, "expected [title, sentences]"))?;
            let text: String = sents.iter().filter_map(Value::as_str).collect();
            let pid = ds.add_paragraph(title, text.trim());
            if support_titles.iter().any(|t| t == title) {
                support.push(pid);
            } else {
                distract.push(pid);
            }
        }
        ds.examples.push(QAExample {
            id,
            question,
            gold_answers: vec![answer],
            supporting_doc_ids: support,
            distractor_doc_ids: distract,
        });
    }
    Ok(())
}

fn load_musique(records: &[Value], cur: &Cursor<'_>, ds: &mut Dataset) -> Result<(), EvalError> {
    for (i, r) in records.iter().enumerate() {
        let ptr = format!("/{i}");
        let id = cur.str_field(r, &ptr, "id")?;
        let question = cur.str_field(r, &ptr, "question")?;
        let mut gold = vec![cur.str_field(r, &ptr, "answer")?];
        if let Some(aliases) = r.get("answer_aliases").and_then(Value::as_array) {
            gold.extend(aliases.iter().filter_map(Value::as_str).map(str::to_owned));
        }
        let mut support = Vec::new();
        let mut distract = Vec::new();
        let pptr = format!("{ptr}/paragraphs");
        for (j, p) in cur.array(cur.field(r, &ptr, "paragraphs")?, &pptr)?.iter().enumerate() {
            let jp = format!("{pptr}/{j}");
            let title = cur.str_field(p, &jp, "title")?;
            let text = cur.str_field(p, &jp, "paragraph_text")?;
            let pid = ds.add_paragraph(&title, &text);
            if p.get("is_supporting").and_then(Value::as_bool).unwrap_or(false) {
                support.push(pid);
            } else {
                distract.push(pid);
            }
        }
        ds.examples.push(QAExample {
            id,
            question,
            gold_answers: gold,
            supporting_doc_ids: support,
            distractor_doc_ids: distract,
        });
    }
    Ok(())
}

/// DPR-style records: `positive_ctxs` support, `negative_ctxs` then
/// `hard_negative_ctxs` distract (first [`MAX_DPR_DISTRACTORS`] kept).
fn load_dpr(records: &[Value], cur: &Cursor<'_>, ds: &mut Dataset, prefix: &str) -> Result<(), EvalError> {
    for (i, r) in records.iter().enumerate() {
        let ptr = format!("/{i}");
        let id = cur
            .str_field(r, &ptr, "id")
            .unwrap_or_else(|_| format!("{prefix}-{i}"));
        let question = cur.str_field(r, &ptr, "question")?;
        let aptr = format!("{ptr}/answers");
        let gold: Vec<String> = cur
            .array(cur.field(r, &ptr, "answers")?, &aptr)?
            .iter()
            .map(|a| a.as_str().map(str::to_owned).ok_or_else(|| cur.err(&aptr, "expected strings")))
            .collect::<Result<_, _>>()?;
        let mut ctxs = |key: &str, limit: usize| -> Result<Vec<String>, EvalError> {
            let Some(list) = r.get(key) else { return Ok(Vec::new()) };
            let kptr = format!("{ptr}/{key}");
            let mut ids = Vec::new();
            for (j, c) in cur.array(list, &kptr)?.iter().take(limit).enumerate() {
                let cptr = format!("{kptr}/{j}");
                let title = cur.str_field(c, &cptr, "title")?;
                let text = cur.str_field(c, &cptr, "text")?;
                ids.push(ds.add_paragraph(&title, &text));
            }
            Ok(ids)
        };
        let support = ctxs("positive_ctxs", usize::MAX)?;
        if !r.get("positive_ctxs").is_some_and(Value::is_array) {
            return Err(cur.err(&ptr, "missing field \"positive_ctxs\""));
        }
        let mut distract = ctxs("negative_ctxs", MAX_DPR_DISTRACTORS)?;
        let rest = MAX_DPR_DISTRACTORS - distract.len();
        distract.extend(ctxs("hard_negative_ctxs", rest)?);
        ds.examples.push(QAExample {
            id,
            question,
            gold_answers: gold,
            supporting_doc_ids: support,
            distractor_doc_ids: distract,
        });
    }
    Ok(())
}

/// Loads a dataset file (JSON array or JSONL) and optionally samples it.
pub fn load_dataset(path: &Path, format: DatasetFormat, sample: Option<usize>, seed: u64) -> Result<Dataset, EvalError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: shown.clone(),
        source,
    })?;
    let cur = Cursor { path: &shown };
    let records = parse_records(&text, &cur)?;
    let mut ds = Dataset::default();
    match format {
        DatasetFormat::Hotpotqa | DatasetFormat::Twowiki => load_wiki_style(&records, &cur, &mut ds)?,
        DatasetFormat::Musique => load_musique(&records, &cur, &mut ds)?,
        DatasetFormat::Nq | DatasetFormat::Webq => load_dpr(&records, &cur, &mut ds, format.as_str())?,
    }
    let mut seen = std::collections::HashSet::new();
    for (i, e) in ds.examples.iter().enumerate() {
        if e.gold_answers.is_empty() {
            return Err(cur.err(&format!("/{i}"), "no gold answers"));
        }
        if !seen.insert(e.id.as_str()) {
            return Err(EvalError::DuplicateId(e.id.clone()));
        }
    }
    Ok(match sample {
        Some(n) => ds.sample(n, seed),
        None => ds,
    })
}

/// One document per distinct paragraph referenced by the examples, ordered
/// by id. Document ids are the paragraph ids.
pub fn build_eval_corpus(ds: &Dataset) -> Result<Vec<Document>, EvalError> {
    let mut used: BTreeMap<&str, &Paragraph> = BTreeMap::new();
    for e in &ds.examples {
        for pid in e.supporting_doc_ids.iter().chain(&e.distractor_doc_ids) {
            let p = ds.paragraphs.get(pid).ok_or_else(|| EvalError::DanglingReference {
                example: e.id.clone(),
                paragraph: pid.clone(),
            })?;
            used.insert(pid, p);
        }
    }
    Ok(used
        .into_iter()
        .map(|(id, p)| Document::new(id, p.title.clone(), p.text.clone()))
        .collect())
}

pub fn build_eval_store(ds: &Dataset) -> Result<DocumentStore, EvalError> {
    Ok(DocumentStore::from_documents(build_eval_corpus(ds)?)?)
}

/// SQuAD normalization: lowercase, drop ASCII punctuation, drop articles,
/// collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &[String]) -> u8 {
    let p = normalize_answer(pred);
    u8::from(gold.iter().any(|g| normalize_answer(g) == p))
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let p: Vec<String> = normalize_answer(pred).split_whitespace().map(str::to_owned).collect();
    let g: Vec<String> = normalize_answer(gold).split_whitespace().map(str::to_owned).collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token F1 over the gold answers (0 when there are none).
pub fn token_f1(pred: &str, gold: &[String]) -> f64 {
    gold.iter().map(|g| f1_single(pred, g)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub question: String,
    pub prediction: String,
    pub gold_answers: Vec<String>,
    pub em: u8,
    pub f1: f64,
    pub selected_granularity: Option<GranularityLevel>,
    pub iterations_used: usize,
    pub stop_reason: Option<StopReason>,
    pub latency: AnswerTimings,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregates {
    pub examples: usize,
    pub answered: usize,
    pub failed: usize,
    pub mean_em: f64,
    pub mean_f1: f64,
    pub mean_iterations: f64,
    /// Fraction of answered examples per selected level.
    pub granularity_distribution: BTreeMap<GranularityLevel, f64>,
    pub mean_latency: AnswerTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: EvalAggregates,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Aggregates are computed over rows sorted by id, so the result does not
/// depend on row order.
pub fn aggregate(rows: &[EvalRow]) -> EvalAggregates {
    let mut sorted: Vec<&EvalRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let answered: Vec<&EvalRow> = sorted.iter().copied().filter(|r| r.selected_granularity.is_some()).collect();
    let mut distribution = BTreeMap::new();
    if !answered.is_empty() {
        for level in GranularityLevel::ALL {
            let n = answered.iter().filter(|r| r.selected_granularity == Some(level)).count();
            distribution.insert(level, n as f64 / answered.len() as f64);
        }
    }
    let lat = |f: fn(&AnswerTimings) -> f64| mean(answered.iter().map(|r| f(&r.latency)));
    EvalAggregates {
        examples: sorted.len(),
        answered: answered.len(),
        failed: sorted.len() - answered.len(),
        mean_em: mean(sorted.iter().map(|r| f64::from(r.em))),
        mean_f1: mean(sorted.iter().map(|r| r.f1)),
        mean_iterations: mean(sorted.iter().map(|r| r.iterations_used as f64)),
        granularity_distribution: distribution,
        mean_latency: AnswerTimings {
            retrieval_ms: lat(|t| t.retrieval_ms),
            extraction_ms: lat(|t| t.extraction_ms),
            rerank_ms: lat(|t| t.rerank_ms),
            integration_ms: lat(|t| t.integration_ms),
            generation_ms: lat(|t| t.generation_ms),
            total_ms: lat(|t| t.total_ms),
        },
    }
}

/// Runs one example. The trajectory is present whenever the ICI loop
/// completed, with `answer_correct` set from EM when the cascade did too.
pub fn evaluate_example(example: &QAExample, pipeline: &Pipeline) -> (EvalRow, Option<Trajectory>) {
    let mut row = EvalRow {
        id: example.id.clone(),
        question: example.question.clone(),
        prediction: String::new(),
        gold_answers: example.gold_answers.clone(),
        em: 0,
        f1: 0.0,
        selected_granularity: None,
        iterations_used: 0,
        stop_reason: None,
        latency: AnswerTimings::default(),
        error: None,
    };
    let mut trajectory = None;
    match pipeline.answer(&example.question) {
        Ok(out) => {
            row.em = exact_match(&out.final_answer, &example.gold_answers);
            row.f1 = token_f1(&out.final_answer, &example.gold_answers);
            row.prediction = out.final_answer;
            row.selected_granularity = Some(out.cascade.selected);
            row.iterations_used = out.ici.iterations_used;
            row.stop_reason = Some(out.ici.stop_reason);
            row.latency = out.timings;
            let mut t = record_trajectory(&example.id, &out.ici);
            t.answer_correct = Some(row.em == 1);
            trajectory = Some(t);
        }
        Err(e) => {
            match &e {
                PipelineError::Ici(f) => row.iterations_used = f.partial.iterations_used,
                PipelineError::Cascade { ici, .. } => {
                    row.iterations_used = ici.iterations_used;
                    row.stop_reason = Some(ici.stop_reason);
                    trajectory = Some(record_trajectory(&example.id, ici));
                }
            }
            log::warn!("example {} failed: {e}", example.id);
            row.error = Some(e.to_string());
        }
    }
    (row, trajectory)
}

/// Runs every example on up to `workers` threads. Rows keep dataset order.
pub fn run_eval(examples: &[QAExample], pipeline: &Pipeline, workers: usize) -> EvalReport {
    run_eval_recording(examples, pipeline, workers).0
}

/// [`run_eval`] that also returns the teacher trajectories, in dataset order.
pub fn run_eval_recording(examples: &[QAExample], pipeline: &Pipeline, workers: usize) -> (EvalReport, Vec<Trajectory>) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(EvalRow, Option<Trajectory>)> =
        pool.install(|| examples.par_iter().map(|e| evaluate_example(e, pipeline)).collect());
    let (rows, trajs): (Vec<EvalRow>, Vec<Option<Trajectory>>) = results.into_iter().unzip();
    let aggregates = aggregate(&rows);
    (EvalReport { rows, aggregates }, trajs.into_iter().flatten().collect())
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `metric,value` lines for the aggregates.
    pub fn aggregates_csv(&self) -> String {
        let a = &self.aggregates;
        let mut out = String::from("metric,value\n");
        let mut put = |k: &str, v: f64| {
            let _ = writeln!(out, "{k},{v}");
        };
        put("examples", a.examples as f64);
        put("answered", a.answered as f64);
        put("failed", a.failed as f64);
        put("mean_em", a.mean_em);
        put("mean_f1", a.mean_f1);
        put("mean_iterations", a.mean_iterations);
        for level in GranularityLevel::ALL {
            put(
                &format!("granularity_{}", level.as_str().to_lowercase()),
                a.granularity_distribution.get(&level).copied().unwrap_or(0.0),
            );
        }
        put("latency_retrieval_ms", a.mean_latency.retrieval_ms);
        put("latency_extraction_ms", a.mean_latency.extraction_ms);
        put("latency_rerank_ms", a.mean_latency.rerank_ms);
        put("latency_integration_ms", a.mean_latency.integration_ms);
        put("latency_generation_ms", a.mean_latency.generation_ms);
        put("latency_total_ms", a.mean_latency.total_ms);
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_json()).map_err(|e| EvalError::Report(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golds(g: &[&str]) -> Vec<String> {
        g.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn em_cases() {
        assert_eq!(exact_match("God'S Gift To Women", &golds(&["God'S Gift To Women"])), 1);
        assert_eq!(exact_match("the Rockland County", &golds(&["Rockland County"])), 1);
        assert_eq!(exact_match("Montebello", &golds(&["Rockland County"])), 0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(token_f1("rockland county usa", &golds(&["rockland county"])), 0.8);
        assert_eq!(token_f1("x y", &golds(&["x y"])), 1.0);
        assert_eq!(token_f1("", &golds(&["x"])), 0.0);
        assert_eq!(token_f1("the", &golds(&["a"])), 1.0);
        assert_eq!(token_f1("x", &[]), 0.0);
    }

    #[test]
    fn normalizer() {
        assert_eq!(normalize_answer("  The  U.S.  Army! "), "us army");
        assert_eq!(normalize_answer("an apple a day"), "apple day");
    }

    fn row(id: &str, level: Option<GranularityLevel>, em: u8) -> EvalRow {
        EvalRow {
            id: id.into(),
            question: String::new(),
            prediction: String::new(),
            gold_answers: vec![],
            em,
            f1: f64::from(em) * 0.7 + 0.1,
            selected_granularity: level,
            iterations_used: 2,
            stop_reason: None,
            latency: AnswerTimings::default(),
            error: None,
        }
    }

    #[test]
    fn distribution_counts_answered_only() {
        let rows = vec![
            row("a", Some(GranularityLevel::Triple), 1),
            row("b", Some(GranularityLevel::Default), 0),
            row("c", None, 0),
        ];
        let a = aggregate(&rows);
        assert_eq!(a.granularity_distribution[&GranularityLevel::Triple], 0.5);
        assert_eq!(a.granularity_distribution[&GranularityLevel::Default], 0.5);
        assert_eq!(a.failed, 1);
        assert!((a.mean_em - 1.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn aggregation_is_order_free(ems in prop::collection::vec((0u8..2, 0usize..4), 1..20), seed in any::<u64>()) {
            let rows: Vec<EvalRow> = ems
                .iter()
                .enumerate()
                .map(|(i, (em, l))| row(&format!("q{i:03}"), Some(GranularityLevel::ALL[*l]), *em))
                .collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate(&rows), aggregate(&shuffled));
            let total: f64 = aggregate(&rows).granularity_distribution.values().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn sample_is_seeded() {
        let mut ds = Dataset::default();
        for i in 0..20 {
            let p = ds.add_paragraph(&format!("t{i}"), "body");
            ds.examples.push(QAExample {
                id: format!("e{i}"),
                question: "q".into(),
                gold_answers: vec!["a".into()],
                supporting_doc_ids: vec![p],
                distractor_doc_ids: vec![],
            });
        }
        let a = ds.sample(5, 7);
        let b = ds.sample(5, 7);
        assert_eq!(a.examples, b.examples);
        assert_eq!(a.paragraphs.len(), 5);
        assert!(ds.sample(0, 7).is_empty());
    }

    #[test]
    fn corpus_dedups_and_flags_dangling() {
        let mut ds = Dataset::default();
        let shared = ds.add_paragraph("S", "shared");
        let own = ds.add_paragraph("O", "own");
        for (id, refs) in [("e1", vec![shared.clone()]), ("e2", vec![shared.clone(), own])] {
            ds.examples.push(QAExample {
                id: id.into(),
                question: "q".into(),
                gold_answers: vec!["a".into()],
                supporting_doc_ids: refs,
                distractor_doc_ids: vec![],
            });
        }
        assert_eq!(build_eval_corpus(&ds).unwrap().len(), 2);
        ds.examples[0].distractor_doc_ids.push("pmissing".into());
        match build_eval_corpus(&ds) {
            Err(EvalError::DanglingReference { example, .. }) => assert_eq!(example, "e1"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }
}
