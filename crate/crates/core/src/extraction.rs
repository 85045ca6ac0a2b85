//! Prompted NER and triple extraction, provenance attachment and the offline
//! triple cache.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Document, DocumentStore, Sentence};
use crate::llm::{BackendError, CompletionRequest, LlmBackend, RoleTag};
use crate::prompts;
use crate::text::{normalize_text, tokenize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("cannot parse model output ({message}): {raw:?}")]
    Parse { message: String, raw: String },
    #[error("triple cache i/o on {path}: {message}")]
    Cache { path: String, message: String },
}

/// Knowledge triple with provenance.
///
/// Fields hold normalized text; `doc_id` and `sentence_index` record the
/// source document and sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub doc_id: String,
    pub sentence_index: Option<usize>,
    /// `"(s, r, o)"` over the normalized fields.
    pub normalized: String,
}

impl Triple {
    /// Normalizes all three fields; `None` if any becomes empty.
    pub fn new(
        subject: &str,
        relation: &str,
        object: &str,
        doc_id: impl Into<String>,
        sentence_index: Option<usize>,
    ) -> Option<Self> {
        let (s, r, o) = (normalize_text(subject), normalize_text(relation), normalize_text(object));
        if s.is_empty() || r.is_empty() || o.is_empty() {
            return None;
        }
        Some(Self {
            normalized: serialize_fields(&s, &r, &o),
            subject: s,
            relation: r,
            object: o,
            doc_id: doc_id.into(),
            sentence_index,
        })
    }

    /// Canonical `(s, r, o)` rendering used for scoring and matching.
    pub fn serialized(&self) -> String {
        self.normalized.clone()
    }

    /// Reader rendering: `('s', 'r', 'o')`.
    pub fn quoted(&self) -> String {
        format!("('{}', '{}', '{}')", self.subject, self.relation, self.object)
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.subject, &self.relation, &self.object]
    }

    pub(crate) fn tie_key(&self) -> (&str, Option<usize>, &str) {
        (&self.doc_id, self.sentence_index, &self.normalized)
    }
}

/// `"(s, r, o)"` of three raw fields after normalization.
pub fn normalized_key(subject: &str, relation: &str, object: &str) -> String {
    serialize_fields(&normalize_text(subject), &normalize_text(relation), &normalize_text(object))
}

fn serialize_fields(s: &str, r: &str, o: &str) -> String {
    format!("({s}, {r}, {o})")
}

/// Reranked candidates of one round, in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTripleSet {
    pub query: String,
    pub iteration: usize,
    pub triples: Vec<Triple>,
}

impl CandidateTripleSet {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Parses a JSON object, retrying once on the span between the outermost braces.
pub(crate) fn parse_braced_json(raw: &str) -> Result<serde_json::Map<String, Value>, String> {
    let first = serde_json::from_str::<Value>(raw.trim());
    let value = match first {
        Ok(v) => v,
        Err(e) => {
            let (Some(open), Some(close)) = (raw.find('{'), raw.rfind('}')) else {
                return Err(e.to_string());
            };
            if close < open {
                return Err(e.to_string());
            }
            serde_json::from_str::<Value>(&raw[open..=close]).map_err(|e| e.to_string())?
        }
    };
    match value {
        Value::Object(map) => Ok(map),
        other => Err(format!("expected a JSON object, got {}", json_kind(&other))),
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Parses `{"named entities": [...]}`.
pub fn parse_entities(raw: &str) -> Result<Vec<String>, ExtractionError> {
    let perr = |message: String| ExtractionError::Parse {
        message,
        raw: raw.to_owned(),
    };
    let map = parse_braced_json(raw).map_err(perr)?;
    let list = map
        .get("named entities")
        .ok_or_else(|| perr("missing \"named entities\" key".into()))?
        .as_array()
        .ok_or_else(|| perr("\"named entities\" is not a list".into()))?;
    Ok(list.iter().filter_map(scalar_text).collect())
}

/// Rows of a `{key: [[s, r, o], ...]}` object. Rows with arity other than 3,
/// non-scalar items, or an empty normalized field are counted in `dropped`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedRows {
    pub rows: Vec<[String; 3]>,
    pub dropped: usize,
}

pub(crate) fn parse_rows(raw: &str, key: &str) -> Result<ParsedRows, String> {
    let map = parse_braced_json(raw)?;
    let list = map
        .get(key)
        .ok_or_else(|| format!("missing {key:?} key"))?
        .as_array()
        .ok_or_else(|| format!("{key:?} is not a list"))?;
    let mut out = ParsedRows::default();
    for row in list {
        let fields: Option<Vec<String>> = row.as_array().and_then(|r| r.iter().map(scalar_text).collect());
        match fields {
            Some(f) if f.len() == 3 && f.iter().all(|x| !normalize_text(x).is_empty()) => {
                let [s, r, o]: [String; 3] = f.try_into().unwrap();
                out.rows.push([s, r, o]);
            }
            _ => out.dropped += 1,
        }
    }
    Ok(out)
}

/// Parses `{"triples": [[s, r, o], ...]}`.
pub fn parse_triples(raw: &str) -> Result<ParsedRows, ExtractionError> {
    parse_rows(raw, "triples").map_err(|message| ExtractionError::Parse {
        message,
        raw: raw.to_owned(),
    })
}

/// Links a triple to its document and best-overlapping sentence.
///
/// The sentence is the one sharing the most normalized tokens with the
/// subject and object; ties go to the earliest, and zero overlap leaves the
/// sentence unset. Returns `None` if a field normalizes to empty.
pub fn attach_provenance(fields: &[String; 3], doc: &Document, sentences: &[Sentence]) -> Option<Triple> {
    let anchor: HashSet<String> = tokenize(&fields[0]).into_iter().chain(tokenize(&fields[2])).collect();
    let mut best: Option<(usize, usize)> = None;
    for s in sentences {
        let toks: HashSet<String> = tokenize(&s.text).into_iter().collect();
        let overlap = anchor.intersection(&toks).count();
        if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
            best = Some((s.index, overlap));
        }
    }
    Triple::new(&fields[0], &fields[1], &fields[2], doc.id.clone(), best.map(|(i, _)| i))
}

/// Text passed to the NER prompt: title line, then body.
fn passage_text(doc: &Document) -> String {
    if doc.title.is_empty() {
        doc.body.clone()
    } else {
        format!("{}\n{}", doc.title, doc.body)
    }
}

/// Named entities of a document. A document without body text yields no
/// entities and issues no call.
pub fn extract_entities(doc: &Document, backend: &dyn LlmBackend) -> Result<Vec<String>, ExtractionError> {
    if doc.body.trim().is_empty() {
        return Ok(Vec::new());
    }
    let req = CompletionRequest::new(RoleTag::Ner, prompts::ner_prompt(&passage_text(doc)));
    let out = backend.complete(&req)?;
    parse_entities(&out.text)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleExtraction {
    pub triples: Vec<Triple>,
    pub dropped: usize,
}

pub fn render_entity_list(entities: &[String]) -> String {
    serde_json::json!({ "named entities": entities }).to_string()
}

/// Triples of a document, provenance-attached, in response order.
pub fn extract_triples(
    doc: &Document,
    sentences: &[Sentence],
    entities: &[String],
    backend: &dyn LlmBackend,
) -> Result<TripleExtraction, ExtractionError> {
    if doc.body.trim().is_empty() {
        return Ok(TripleExtraction::default());
    }
    let prompt = prompts::triple_prompt(&doc.title, &doc.body, &render_entity_list(entities));
    let out = backend.complete(&CompletionRequest::new(RoleTag::TripleExtract, prompt))?;
    let parsed = parse_triples(&out.text)?;
    let mut result = TripleExtraction {
        dropped: parsed.dropped,
        ..Default::default()
    };
    for row in &parsed.rows {
        match attach_provenance(row, doc, sentences) {
            Some(t) => result.triples.push(t),
            None => result.dropped += 1,
        }
    }
    if result.dropped > 0 {
        warn!("document {}: dropped {} malformed triple row(s)", doc.id, result.dropped);
    }
    Ok(result)
}

/// NER followed by triple extraction.
pub fn extract_document(
    doc: &Document,
    sentences: &[Sentence],
    backend: &dyn LlmBackend,
) -> Result<Vec<Triple>, ExtractionError> {
    let entities = extract_entities(doc, backend)?;
    Ok(extract_triples(doc, sentences, &entities, backend)?.triples)
}

type CachedRow = (String, String, String, Option<usize>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheRecord {
    doc_id: String,
    fingerprint: String,
    model: String,
    triples: Vec<CachedRow>,
}

/// Per-document extraction results keyed by doc id.
///
/// A lookup hits only when the stored fingerprint and model id match this
/// cache's. Entries are never overwritten. When backed by a file, every new
/// entry is appended as one JSONL record.
#[derive(Debug)]
pub struct TripleCache {
    fingerprint: String,
    model: String,
    entries: RwLock<HashMap<String, Vec<Triple>>>,
    file: Option<(PathBuf, Mutex<fs::File>)>,
}

impl TripleCache {
    pub fn in_memory(fingerprint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            fingerprint: fingerprint.into(),
            model: model.into(),
            entries: RwLock::new(HashMap::new()),
            file: None,
        }
    }

    /// In-memory cache for the current prompt assets and `model`.
    pub fn for_model(model: &str) -> Self {
        Self::in_memory(prompts::extraction_fingerprint(), model)
    }

    /// Opens (or creates) a JSONL cache file. Records with another
    /// fingerprint or model are kept on disk but never served.
    pub fn open(path: &Path, fingerprint: impl Into<String>, model: impl Into<String>) -> Result<Self, ExtractionError> {
        let fingerprint = fingerprint.into();
        let model = model.into();
        let cerr = |message: String| ExtractionError::Cache {
            path: path.display().to_string(),
            message,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let f = fs::File::open(path).map_err(|e| cerr(e.to_string()))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| cerr(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord =
                    serde_json::from_str(&line).map_err(|e| cerr(format!("line {}: {e}", i + 1)))?;
                if rec.fingerprint != fingerprint || rec.model != model {
                    continue;
                }
                let triples = rec
                    .triples
                    .iter()
                    .filter_map(|(s, r, o, idx)| Triple::new(s, r, o, rec.doc_id.clone(), *idx))
                    .collect();
                entries.entry(rec.doc_id).or_insert(triples);
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| cerr(e.to_string()))?;
        }
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| cerr(e.to_string()))?;
        Ok(Self {
            fingerprint,
            model,
            entries: RwLock::new(entries),
            file: Some((path.to_owned(), Mutex::new(file))),
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.entries.read().unwrap().contains_key(doc_id)
    }

    pub fn get(&self, doc_id: &str) -> Option<Vec<Triple>> {
        self.entries.read().unwrap().get(doc_id).cloned()
    }

    /// Stores `triples` for `doc_id` unless an entry already exists.
    pub fn insert(&self, doc_id: &str, triples: Vec<Triple>) -> Result<(), ExtractionError> {
        let mut entries = self.entries.write().unwrap();
        if entries.contains_key(doc_id) {
            return Ok(());
        }
        if let Some((path, file)) = &self.file {
            let rec = CacheRecord {
                doc_id: doc_id.to_owned(),
                fingerprint: self.fingerprint.clone(),
                model: self.model.clone(),
                triples: triples
                    .iter()
                    .map(|t| (t.subject.clone(), t.relation.clone(), t.object.clone(), t.sentence_index))
                    .collect(),
            };
            let line = serde_json::to_string(&rec).expect("cache record serializes");
            let mut f = file.lock().unwrap();
            writeln!(f, "{line}").map_err(|e| ExtractionError::Cache {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            f.flush().ok();
        }
        entries.insert(doc_id.to_owned(), triples);
        Ok(())
    }
}

/// Result of extracting a batch of documents.
#[derive(Debug, Clone, Default)]
pub struct ExtractionBatch {
    /// Document order, then response order.
    pub triples: Vec<Triple>,
    pub failures: Vec<(String, ExtractionError)>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Extracts triples for `doc_ids`, serving cache hits without model calls and
/// writing misses back. With `parallel`, misses are extracted concurrently
/// (bounded by the backend); output order is unaffected.
pub fn extract_for_documents(
    doc_ids: &[String],
    store: &DocumentStore,
    cache: Option<&TripleCache>,
    backend: &dyn LlmBackend,
    parallel: bool,
) -> ExtractionBatch {
    let mut batch = ExtractionBatch::default();
    let mut slots: Vec<Option<Result<Vec<Triple>, ExtractionError>>> = vec![None; doc_ids.len()];
    let mut misses = Vec::new();
    for (i, id) in doc_ids.iter().enumerate() {
        match cache.and_then(|c| c.get(id)) {
            Some(t) => {
                batch.cache_hits += 1;
                slots[i] = Some(Ok(t));
            }
            None => misses.push(i),
        }
    }
    batch.cache_misses = misses.len();

    let run = |i: usize| -> Result<Vec<Triple>, ExtractionError> {
        let id = &doc_ids[i];
        let doc = store.get(id).ok_or_else(|| ExtractionError::Parse {
            message: format!("unknown document id {id:?}"),
            raw: String::new(),
        })?;
        extract_document(doc, store.sentences(id).unwrap_or(&[]), backend)
    };
    let fresh: Vec<(usize, Result<Vec<Triple>, ExtractionError>)> = if parallel {
        misses.par_iter().map(|&i| (i, run(i))).collect()
    } else {
        misses.iter().map(|&i| (i, run(i))).collect()
    };
    for (i, res) in fresh {
        if let (Ok(triples), Some(c)) = (&res, cache) {
            if let Err(e) = c.insert(&doc_ids[i], triples.clone()) {
                warn!("cannot write triple cache: {e}");
            }
        }
        slots[i] = Some(res);
    }

    for (id, slot) in doc_ids.iter().zip(slots) {
        match slot.expect("every document processed") {
            Ok(t) => batch.triples.extend(t),
            Err(e) => batch.failures.push((id.clone(), e)),
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::segment_sentences;
    use crate::llm::{ReplayBackend, ReplayRule, ReplayScript};

    fn doc(id: &str, title: &str, body: &str) -> Document {
        Document::new(id, title, body)
    }

    #[test]
    fn parses_entities_and_trims_trailing_prose() {
        assert_eq!(parse_entities(r#"{"named entities": ["A", "B"]}"#).unwrap(), ["A", "B"]);
        let noisy = "Sure! Here you go:\n{\"named entities\": [\"Radio City\"]}\nHope this helps.";
        assert_eq!(parse_entities(noisy).unwrap(), ["Radio City"]);
        assert_eq!(parse_entities(r#"{"named entities": []}"#).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn entity_parse_failure_carries_raw() {
        match parse_entities("no json here").unwrap_err() {
            ExtractionError::Parse { raw, .. } => assert_eq!(raw, "no json here"),
            e => panic!("{e:?}"),
        }
        assert!(parse_entities(r#"{"entities": []}"#).is_err());
        assert!(parse_entities("} {").is_err());
    }

    #[test]
    fn triple_rows_with_wrong_arity_dropped() {
        let parsed = parse_triples(r#"{"triples": [["a","b"], ["x","y","z"], ["p","",""], "junk"]}"#).unwrap();
        assert_eq!(parsed.rows, vec![["x".to_string(), "y".into(), "z".into()]]);
        assert_eq!(parsed.dropped, 3);
        assert!(parse_triples(r#"{"triples": []}"#).unwrap().rows.is_empty());
    }

    #[test]
    fn provenance_picks_max_overlap_sentence() {
        let d = doc(
            "eh",
            "Erik Hort",
            "Erik Hort was born in Montebello, New York. He played soccer for Montebello United.",
        );
        let sents = segment_sentences(&d);
        let t = attach_provenance(&["Erik Hort".into(), "born in".into(), "Montebello".into()], &d, &sents).unwrap();
        // brute force: sentence 0 shares {erik, hort, montebello} = 3, sentence 1 shares {montebello} = 1
        assert_eq!(t.sentence_index, Some(0));
        assert_eq!(t.doc_id, "eh");
        assert_eq!(t.normalized, "(erik hort, born in, montebello)");
    }

    #[test]
    fn provenance_ties_and_misses() {
        let d = doc("d", "", "Alpha met Beta. Beta met Alpha.");
        let sents = segment_sentences(&d);
        let t = attach_provenance(&["alpha".into(), "r".into(), "beta".into()], &d, &sents).unwrap();
        assert_eq!(t.sentence_index, Some(0));
        let t = attach_provenance(&["gamma".into(), "r".into(), "delta".into()], &d, &sents).unwrap();
        assert_eq!(t.sentence_index, None);
        let one = doc("o", "", "Only gamma here");
        let t = attach_provenance(&["gamma".into(), "r".into(), "zeta".into()], &one, &segment_sentences(&one)).unwrap();
        assert_eq!(t.sentence_index, Some(0));
    }

    fn radio_city_backend() -> ReplayBackend {
        ReplayBackend::new(ReplayScript::new(vec![
            ReplayRule::new(RoleTag::Ner, r#"{"named entities": ["Radio City", "India", "3 July 2001"]}"#),
            ReplayRule::new(
                RoleTag::TripleExtract,
                r#"{"triples": [["Radio City", "located in", "India"], ["Radio City", "started on", "3 July 2001"], ["bad"]]}"#,
            ),
        ]))
        .unwrap()
    }

    #[test]
    fn extract_document_attaches_provenance() {
        let d = doc(
            "rc",
            "Radio City",
            "Radio City is India's first private FM radio station and was started on 3 July 2001. It plays Hindi, English and regional songs.",
        );
        let backend = radio_city_backend();
        let sents = segment_sentences(&d);
        let ents = extract_entities(&d, &backend).unwrap();
        let out = extract_triples(&d, &sents, &ents, &backend).unwrap();
        assert_eq!(out.dropped, 1);
        assert_eq!(out.triples.len(), 2);
        assert_eq!(out.triples[1].normalized, "(radio city, started on, 3 july 2001)");
        assert_eq!(out.triples[1].sentence_index, Some(0));
        let prompt = &backend.transcript()[1].prompt;
        assert!(prompt.contains(r#"Entity lists: {"named entities":["Radio City","India","3 July 2001"]}"#));
    }

    #[test]
    fn empty_body_skips_backend() {
        let backend = radio_city_backend();
        let d = doc("t", "Title only", "");
        assert!(extract_entities(&d, &backend).unwrap().is_empty());
        assert!(extract_document(&d, &[], &backend).unwrap().is_empty());
        assert_eq!(backend.counter().total(), 0);
    }

    #[test]
    fn cache_serves_hits_without_calls() {
        let store = DocumentStore::from_documents(vec![
            doc("a", "A", "Radio City is in India."),
            doc("b", "B", "Radio City started on 3 July 2001."),
        ])
        .unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let backend = radio_city_backend();
        let cache = TripleCache::for_model("replay");
        let cold = extract_for_documents(&ids[..1], &store, Some(&cache), &backend, false);
        assert_eq!(backend.counter().extraction(), 2);
        assert_eq!(cold.cache_misses, 1);
        let mixed = extract_for_documents(&ids, &store, Some(&cache), &backend, false);
        assert_eq!((mixed.cache_hits, mixed.cache_misses), (1, 1));
        assert_eq!(backend.counter().extraction(), 4);
        let warm = extract_for_documents(&ids, &store, Some(&cache), &backend, true);
        assert_eq!(backend.counter().extraction(), 4);
        assert_eq!(warm.triples, mixed.triples);
    }

    #[test]
    fn cache_file_roundtrip_and_fingerprint_gate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let t = Triple::new("Radio City", "located in", "India", "a", Some(0)).unwrap();
        let u = Triple::new("x", "y", "z", "a", None).unwrap();
        {
            let c = TripleCache::open(&path, "fp", "m").unwrap();
            c.insert("a", vec![t.clone(), u.clone()]).unwrap();
            c.insert("a", vec![]).unwrap(); // immutable
        }
        let line = fs::read_to_string(&path).unwrap();
        assert_eq!(
            line.trim(),
            r#"{"doc_id":"a","fingerprint":"fp","model":"m","triples":[["radio city","located in","india",0],["x","y","z",null]]}"#
        );
        assert_eq!(TripleCache::open(&path, "fp", "m").unwrap().get("a").unwrap(), vec![t, u]);
        assert!(TripleCache::open(&path, "other", "m").unwrap().get("a").is_none());
        assert!(TripleCache::open(&path, "fp", "other-model").unwrap().get("a").is_none());
    }

    #[test]
    fn backend_errors_are_per_document() {
        let store = DocumentStore::from_documents(vec![doc("a", "A", "Alpha text."), doc("b", "B", "Beta text.")]).unwrap();
        let backend = ReplayBackend::new(ReplayScript::new(vec![
            ReplayRule::new(RoleTag::Ner, r#"{"named entities": []}"#).containing("Alpha"),
            ReplayRule::new(RoleTag::TripleExtract, r#"{"triples": [["alpha", "is", "text"]]}"#),
        ]))
        .unwrap();
        let batch = extract_for_documents(&["a".into(), "b".into()], &store, None, &backend, false);
        assert_eq!(batch.triples.len(), 1);
        assert_eq!(batch.failures.len(), 1);
        assert_eq!(batch.failures[0].0, "b");
    }

    proptest::proptest! {
        #[test]
        fn parsers_never_panic(raw in "\\PC{0,200}") {
            let _ = parse_entities(&raw);
            let _ = parse_triples(&raw);
        }

        #[test]
        fn parsers_never_panic_on_jsonish(raw in "[{}\\[\\]\",:a-z ]{0,80}") {
            let _ = parse_entities(&raw);
            let _ = parse_triples(&raw);
        }
    }
}
