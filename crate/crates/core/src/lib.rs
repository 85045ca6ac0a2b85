//! Iterative construction-integration retrieval over knowledge triples.
//!
//! A question is answered in two stages. The ICI loop ([`ici`]) repeatedly
//! retrieves documents for the current query, extracts and reranks knowledge
//! triples, and asks an integrator model to keep the relevant ones and propose
//! the next-hop query. Kept triples are projected back onto their source
//! sentences and documents, and the accumulated pools feed the cascaded reader
//! ([`acmg`]), which answers from triples first and escalates to sentences and
//! passages only when the reader refuses.
//!
//! Every model call goes through [`llm::LlmBackend`], so the whole engine runs
//! against a deterministic [`llm::ReplayBackend`] in tests.

pub mod acmg;
pub mod corpus;
pub mod distill;
pub mod eval;
pub mod extraction;
pub mod fixtures;
pub mod ici;
pub mod integration;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod text;

pub use acmg::{CascadeResult, GranularityAnswer, GranularityLevel};
pub use corpus::{CorpusStats, Document, DocumentStore, Sentence};
pub use extraction::{CandidateTripleSet, Triple, TripleCache};
pub use ici::{CumulativePools, IciResult, PipelineConfig, StopReason};
pub use integration::{HistoryContext, IntegrationDecision, IterationRecord};
pub use llm::{CompletionRequest, CompletionResult, LlmBackend, ReplayBackend, RoleTag};
pub use pipeline::{Pipeline, PipelineOutput};
pub use retrieval::{Bm25Index, Retriever, RetrieverConfig, ScoredDocument, ScorerKind};

/// Engine version recorded in run manifests and caches.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
