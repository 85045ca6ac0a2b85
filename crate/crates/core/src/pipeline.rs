//! End-to-end answering: ICI loop followed by the granularity cascade.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acmg::{cascade_with, CascadeError, CascadeResult, RefusalTemplates};
use crate::corpus::DocumentStore;
use crate::extraction::TripleCache;
use crate::ici::{run_ici, IciFailure, IciResult, PipelineConfig, Services};
use crate::llm::LlmBackend;
use crate::retrieval::{RetrievalError, Retriever};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerTimings {
    pub retrieval_ms: f64,
    pub extraction_ms: f64,
    pub rerank_ms: f64,
    pub integration_ms: f64,
    pub generation_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub ici: IciResult,
    pub cascade: CascadeResult,
    /// Selected answer with surrounding whitespace and one trailing period removed.
    pub final_answer: String,
    pub timings: AnswerTimings,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ici(#[from] IciFailure),
    #[error("{error}")]
    Cascade {
        ici: Box<IciResult>,
        #[source]
        error: CascadeError,
    },
}

/// Strips whitespace and a single trailing period from reader output.
pub fn clean_answer(answer: &str) -> String {
    let a = answer.trim();
    a.strip_suffix('.').unwrap_or(a).trim_end().to_owned()
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub refusal: RefusalTemplates,
    store: Arc<DocumentStore>,
    retriever: Arc<Retriever>,
    cache: Arc<TripleCache>,
    backend: Arc<dyn LlmBackend>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("documents", &self.store.len())
            .field("model", &self.backend.model_id())
            .finish()
    }
}

impl Pipeline {
    /// Indexes `store` and starts with an empty in-memory triple cache.
    pub fn new(store: DocumentStore, config: PipelineConfig, backend: Arc<dyn LlmBackend>) -> Result<Self, RetrievalError> {
        config.retriever.validate()?;
        let retriever = Retriever::build(&store)?;
        let cache = TripleCache::for_model(backend.model_id());
        Ok(Self::from_parts(Arc::new(store), Arc::new(retriever), Arc::new(cache), config, backend))
    }

    pub fn from_parts(
        store: Arc<DocumentStore>,
        retriever: Arc<Retriever>,
        cache: Arc<TripleCache>,
        config: PipelineConfig,
        backend: Arc<dyn LlmBackend>,
    ) -> Self {
        Self {
            config,
            refusal: RefusalTemplates::default(),
            store,
            retriever,
            cache,
            backend,
        }
    }

    pub fn with_cache(mut self, cache: Arc<TripleCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn store(&self) -> &DocumentStore {
        &self.store
    }

    pub fn cache(&self) -> &TripleCache {
        &self.cache
    }

    pub fn backend(&self) -> &dyn LlmBackend {
        self.backend.as_ref()
    }

    pub fn services(&self) -> Services<'_> {
        Services {
            store: &self.store,
            retriever: &self.retriever,
            cache: &self.cache,
            backend: self.backend.as_ref(),
        }
    }

    pub fn run_ici(&self, x: &str) -> Result<IciResult, IciFailure> {
        run_ici(x, &self.config, &self.services())
    }

    pub fn answer(&self, x: &str) -> Result<PipelineOutput, PipelineError> {
        let started = Instant::now();
        let ici = self.run_ici(x)?;
        let t0 = Instant::now();
        let cascade = match cascade_with(x, &ici.pools, &self.store, self.backend.as_ref(), &self.refusal) {
            Ok(c) => c,
            Err(error) => {
                return Err(PipelineError::Cascade {
                    ici: Box::new(ici),
                    error,
                })
            }
        };
        let generation_ms = t0.elapsed().as_secs_f64() * 1e3;
        let phases = ici.total_timings();
        Ok(PipelineOutput {
            final_answer: clean_answer(&cascade.final_answer),
            timings: AnswerTimings {
                retrieval_ms: phases.retrieval_ms,
                extraction_ms: phases.extraction_ms,
                rerank_ms: phases.rerank_ms,
                integration_ms: phases.integration_ms,
                generation_ms,
                total_ms: started.elapsed().as_secs_f64() * 1e3,
            },
            ici,
            cascade,
        })
    }
}
