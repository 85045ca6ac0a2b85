//! Cascaded multi-granularity answer generation.
//!
//! The reader is tried on the triple pool first, then on the source
//! sentences, then on whole passages. A level is accepted as soon as the
//! reader does not refuse. If every level refuses, the passage prompt is
//! re-run without its refusal option and labelled [`GranularityLevel::Default`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentStore;
use crate::ici::CumulativePools;
use crate::llm::{BackendError, CompletionRequest, LlmBackend, RoleTag};
use crate::prompts::{forced_reader_template, READER_PASSAGE_TEMPLATE, READER_SENTENCE_TEMPLATE, READER_TRIPLE_TEMPLATE};
use crate::text::{normalize_text, render_template};

/// Rendered in place of an empty context.
pub const NO_EVIDENCE: &str = "(no evidence)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GranularityLevel {
    Triple,
    Sentence,
    Passage,
    Default,
}

impl GranularityLevel {
    pub const ALL: [GranularityLevel; 4] = [Self::Triple, Self::Sentence, Self::Passage, Self::Default];
    pub const CASCADE: [GranularityLevel; 3] = [Self::Triple, Self::Sentence, Self::Passage];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Triple => "TRIPLE",
            Self::Sentence => "SENTENCE",
            Self::Passage => "PASSAGE",
            Self::Default => "DEFAULT",
        }
    }

    pub fn role(self) -> RoleTag {
        match self {
            Self::Triple => RoleTag::ReaderTriple,
            Self::Sentence => RoleTag::ReaderSentence,
            Self::Passage => RoleTag::ReaderPassage,
            Self::Default => RoleTag::ReaderDefault,
        }
    }
}

impl fmt::Display for GranularityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityAnswer {
    pub level: GranularityLevel,
    pub raw: String,
    pub thought: String,
    /// `None` exactly when the reader refused.
    pub answer: Option<String>,
    pub sufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub attempts: Vec<GranularityAnswer>,
    pub selected: GranularityLevel,
    pub final_answer: String,
}

impl CascadeResult {
    pub fn reader_calls(&self) -> usize {
        self.attempts.len()
    }
}

#[derive(Debug, Error)]
#[error("reader failed at {level} after {} attempt(s): {source}", attempts.len())]
pub struct CascadeError {
    pub level: GranularityLevel,
    #[source]
    pub source: BackendError,
    pub attempts: Vec<GranularityAnswer>,
}

/// Substrings that mark an answer segment as a refusal, matched after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalTemplates {
    pub tokens: Vec<String>,
}

impl Default for RefusalTemplates {
    fn default() -> Self {
        Self {
            tokens: vec!["unanswerable".to_owned()],
        }
    }
}

impl RefusalTemplates {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        Self {
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }

    pub fn matches_segment(&self, segment: &str) -> bool {
        let norm = normalize_text(segment);
        if norm.is_empty() {
            return true;
        }
        self.tokens
            .iter()
            .map(|t| normalize_text(t))
            .any(|t| !t.is_empty() && norm.contains(&t))
    }
}

/// Splits reader output into (thought, answer segment).
///
/// The answer is whatever follows the last `Answer:`; without one it is the
/// last non-empty line.
pub fn split_reader_output(raw: &str) -> (String, String) {
    if let Some(pos) = raw.rfind("Answer:") {
        let head = &raw[..pos];
        let thought = match head.rfind("Thought:") {
            Some(t) => &head[t + "Thought:".len()..],
            None => head,
        };
        (thought.trim().to_owned(), raw[pos + "Answer:".len()..].trim().to_owned())
    } else {
        let trimmed = raw.trim_end();
        let (head, tail) = match trimmed.rfind('\n') {
            Some(i) => (&trimmed[..i], &trimmed[i + 1..]),
            None => ("", trimmed),
        };
        let head = head.trim();
        let head = head.strip_prefix("Thought:").unwrap_or(head);
        (head.trim().to_owned(), tail.trim().to_owned())
    }
}

pub fn is_refusal(raw: &str) -> bool {
    is_refusal_with(raw, &RefusalTemplates::default())
}

pub fn is_refusal_with(raw: &str, templates: &RefusalTemplates) -> bool {
    templates.matches_segment(&split_reader_output(raw).1)
}

/// Reader context for one level. `Default` renders like `Passage`.
pub fn render_context(pools: &CumulativePools, level: GranularityLevel, store: &DocumentStore) -> String {
    let rendered = match level {
        GranularityLevel::Triple => {
            if pools.triples.is_empty() {
                String::new()
            } else {
                let items: Vec<String> = pools.triples.iter().map(|t| t.quoted()).collect();
                format!("triples: {}", items.join(", "))
            }
        }
        GranularityLevel::Sentence => {
            // documents in pool order, sentences by index within each document
            let mut lines = Vec::new();
            for doc in &pools.documents {
                let mut idx: Vec<usize> = pools
                    .sentences
                    .iter()
                    .filter(|s| &s.doc_id == doc)
                    .map(|s| s.index)
                    .collect();
                idx.sort_unstable();
                for i in idx {
                    if let Some(s) = store.sentence(doc, i) {
                        lines.push(s.text.clone());
                    }
                }
            }
            lines.join("\n")
        }
        GranularityLevel::Passage | GranularityLevel::Default => pools
            .documents
            .iter()
            .filter_map(|d| store.get(d))
            .map(|d| format!("{}\n{}", d.title, d.body))
            .collect::<Vec<_>>()
            .join("\n\n"),
    };
    if rendered.trim().is_empty() {
        NO_EVIDENCE.to_owned()
    } else {
        rendered
    }
}

pub fn reader_prompt(x: &str, context: &str, level: GranularityLevel) -> String {
    let slots = [("{context}", context), ("{query}", x)];
    match level {
        GranularityLevel::Triple => render_template(READER_TRIPLE_TEMPLATE, &slots),
        GranularityLevel::Sentence => render_template(READER_SENTENCE_TEMPLATE, &slots),
        GranularityLevel::Passage => render_template(READER_PASSAGE_TEMPLATE, &slots),
        GranularityLevel::Default => render_template(&forced_reader_template(), &slots),
    }
}

pub fn answer_at(
    x: &str,
    pools: &CumulativePools,
    level: GranularityLevel,
    store: &DocumentStore,
    backend: &dyn LlmBackend,
    templates: &RefusalTemplates,
) -> Result<GranularityAnswer, BackendError> {
    let context = render_context(pools, level, store);
    let prompt = reader_prompt(x, &context, level);
    let raw = backend.complete(&CompletionRequest::new(level.role(), prompt))?.text;
    let (thought, segment) = split_reader_output(&raw);
    let sufficient = !templates.matches_segment(&segment);
    Ok(GranularityAnswer {
        level,
        raw,
        thought,
        answer: sufficient.then_some(segment),
        sufficient,
    })
}

pub fn cascade(
    x: &str,
    pools: &CumulativePools,
    store: &DocumentStore,
    backend: &dyn LlmBackend,
) -> Result<CascadeResult, CascadeError> {
    cascade_with(x, pools, store, backend, &RefusalTemplates::default())
}

pub fn cascade_with(
    x: &str,
    pools: &CumulativePools,
    store: &DocumentStore,
    backend: &dyn LlmBackend,
    templates: &RefusalTemplates,
) -> Result<CascadeResult, CascadeError> {
    let mut attempts: Vec<GranularityAnswer> = Vec::with_capacity(4);
    for level in GranularityLevel::CASCADE {
        let a = match answer_at(x, pools, level, store, backend, templates) {
            Ok(a) => a,
            Err(source) => return Err(CascadeError { level, source, attempts }),
        };
        let done = a.sufficient;
        attempts.push(a);
        if done {
            let final_answer = attempts.last().and_then(|a| a.answer.clone()).unwrap_or_default();
            return Ok(CascadeResult {
                attempts,
                selected: level,
                final_answer,
            });
        }
    }
    let forced = match answer_at(x, pools, GranularityLevel::Default, store, backend, templates) {
        Ok(a) => a,
        Err(source) => {
            return Err(CascadeError {
                level: GranularityLevel::Default,
                source,
                attempts,
            })
        }
    };
    let final_answer = split_reader_output(&forced.raw).1;
    attempts.push(forced);
    Ok(CascadeResult {
        attempts,
        selected: GranularityLevel::Default,
        final_answer,
    })
}
