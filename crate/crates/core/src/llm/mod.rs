//! Completion and embedding backends.
//!
//! The engine talks to models only through [`LlmBackend`]. Two families of
//! implementations exist: [`HttpBackend`] for OpenAI-compatible endpoints and
//! the deterministic [`ReplayBackend`] / [`OracleBackend`] used in tests.

mod embed;
mod http;
mod limiter;
mod replay;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{cosine, HashEmbedder, HASH_EMBEDDING_DIM};
pub use http::{HttpBackend, HttpConfig, DEFAULT_API_KEY_ENV};
pub use limiter::{ConcurrencyLimiter, Permit};
pub use replay::{CallRecord, DefaultAction, OracleBackend, ReplayBackend, ReplayRule, ReplayScript};

/// Which engine step issued a completion request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RoleTag {
    Ner,
    TripleExtract,
    Integrate,
    ReaderTriple,
    ReaderSentence,
    ReaderPassage,
    ReaderDefault,
}

impl RoleTag {
    pub const ALL: [RoleTag; 7] = [
        RoleTag::Ner,
        RoleTag::TripleExtract,
        RoleTag::Integrate,
        RoleTag::ReaderTriple,
        RoleTag::ReaderSentence,
        RoleTag::ReaderPassage,
        RoleTag::ReaderDefault,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::Ner => "NER",
            RoleTag::TripleExtract => "TRIPLE_EXTRACT",
            RoleTag::Integrate => "INTEGRATE",
            RoleTag::ReaderTriple => "READER_TRIPLE",
            RoleTag::ReaderSentence => "READER_SENTENCE",
            RoleTag::ReaderPassage => "READER_PASSAGE",
            RoleTag::ReaderDefault => "READER_DEFAULT",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn is_reader(self) -> bool {
        matches!(
            self,
            RoleTag::ReaderTriple | RoleTag::ReaderSentence | RoleTag::ReaderPassage | RoleTag::ReaderDefault
        )
    }

    pub fn is_extraction(self) -> bool {
        matches!(self, RoleTag::Ner | RoleTag::TripleExtract)
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Default output budget for engine-issued requests.
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role_tag: RoleTag,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    /// Greedy request (temperature 0), as issued everywhere in the engine.
    pub fn new(role_tag: RoleTag, prompt: impl Into<String>) -> Self {
        Self {
            role_tag,
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub latency: Duration,
    pub model_id: String,
    pub token_usage: TokenUsage,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Decode(String),
    #[error("no replay rule matches a {role} request")]
    NoMatchingRule { role: RoleTag },
    #[error("embedding backend unavailable: {0}")]
    EmbeddingUnavailable(String),
    #[error("{0}")]
    Other(String),
}

/// Uniform completion + embedding interface. Implementations are shared
/// across threads.
pub trait LlmBackend: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError>;

    /// One unit-normalized vector per input.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(req)
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(texts)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(req)
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(texts)
    }
}

/// Per-role completion counters.
#[derive(Debug, Default)]
pub struct CallCounter {
    counts: [AtomicUsize; 7],
}

impl CallCounter {
    pub fn record(&self, role: RoleTag) {
        self.counts[role.index()].fetch_add(1, Ordering::SeqCst);
    }

    pub fn get(&self, role: RoleTag) -> usize {
        self.counts[role.index()].load(Ordering::SeqCst)
    }

    pub fn total(&self) -> usize {
        RoleTag::ALL.iter().map(|r| self.get(*r)).sum()
    }

    pub fn readers(&self) -> usize {
        RoleTag::ALL.iter().filter(|r| r.is_reader()).map(|r| self.get(*r)).sum()
    }

    pub fn extraction(&self) -> usize {
        self.get(RoleTag::Ner) + self.get(RoleTag::TripleExtract)
    }

    pub fn reset(&self) {
        for c in &self.counts {
            c.store(0, Ordering::SeqCst);
        }
    }
}

/// Whitespace token count; used for usage accounting by offline backends.
pub(crate) fn rough_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
