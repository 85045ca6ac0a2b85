//! Iterative construction-integration loop.
//!
//! Each round retrieves documents for the current query, extracts and reranks
//! triples into a candidate set, asks the integrator to filter them and plan
//! the next query, then projects the kept triples onto sentences and
//! documents and merges everything into the cumulative pools.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentStore;
use crate::extraction::{extract_for_documents, CandidateTripleSet, ExtractionError, Triple, TripleCache};
use crate::integration::{run_integration, HistoryContext, IntegrationDecision, IterationRecord};
use crate::llm::{BackendError, LlmBackend};
use crate::retrieval::{dedup_triples, rerank_triples, RetrievalError, Retriever, RetrieverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// L: maximum number of rounds.
    pub max_iterations: usize,
    pub retriever: RetrieverConfig,
    /// Integration prompt budget in characters; oldest thoughts are dropped first.
    pub character_budget_history: usize,
    /// Off: every extracted triple becomes a candidate (no top-N).
    pub reranker_enabled: bool,
    /// Extract cache misses concurrently.
    pub parallel_extraction: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 4,
            retriever: RetrieverConfig::default(),
            character_budget_history: 200_000,
            reranker_enabled: true,
            parallel_extraction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceRef {
    pub doc_id: String,
    pub index: usize,
}

/// Cumulative triple, sentence and document sets, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CumulativePools {
    pub triples: Vec<Triple>,
    pub sentences: Vec<SentenceRef>,
    pub documents: Vec<String>,
}

impl CumulativePools {
    pub fn sizes(&self) -> PoolSizes {
        PoolSizes {
            triples: self.triples.len(),
            sentences: self.sentences.len(),
            documents: self.documents.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSizes {
    pub triples: usize,
    pub sentences: usize,
    pub documents: usize,
}

/// Sentence and document refs of the core triples, deduplicated in order.
/// Triples without a sentence contribute only their document.
pub fn project_core(core: &[Triple]) -> (Vec<SentenceRef>, Vec<String>) {
    let mut sents: Vec<SentenceRef> = Vec::new();
    let mut docs: Vec<String> = Vec::new();
    for t in core {
        if let Some(index) = t.sentence_index {
            let r = SentenceRef {
                doc_id: t.doc_id.clone(),
                index,
            };
            if !sents.contains(&r) {
                sents.push(r);
            }
        }
        if !docs.contains(&t.doc_id) {
            docs.push(t.doc_id.clone());
        }
    }
    (sents, docs)
}

/// Order-preserving set union; triples are keyed by normalized serialization.
pub fn update_pools(pools: &CumulativePools, core: &[Triple], sents: &[SentenceRef], docs: &[String]) -> CumulativePools {
    let mut next = pools.clone();
    for t in core {
        if !next.triples.iter().any(|p| p.normalized == t.normalized) {
            next.triples.push(t.clone());
        }
    }
    for s in sents {
        if !next.sentences.contains(s) {
            next.sentences.push(s.clone());
        }
    }
    for d in docs {
        if !next.documents.contains(d) {
            next.documents.push(d.clone());
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoQuestion,
    MaxIterations,
    SafeTermination,
}

/// Wall-clock milliseconds spent per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub retrieval_ms: f64,
    pub extraction_ms: f64,
    pub rerank_ms: f64,
    pub integration_ms: f64,
}

impl PhaseTimings {
    pub fn add(&mut self, other: &PhaseTimings) {
        self.retrieval_ms += other.retrieval_ms;
        self.extraction_ms += other.extraction_ms;
        self.rerank_ms += other.rerank_ms;
        self.integration_ms += other.integration_ms;
    }
}

/// Deterministic per-round summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub query: String,
    pub retrieved: Vec<String>,
    pub extracted_count: usize,
    pub candidate_count: usize,
    pub decision: IntegrationDecision,
    pub integration_retries: usize,
    pub pools: PoolSizes,
}

/// One line of the per-question run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    #[serde(flatten)]
    pub summary: RoundSummary,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IciResult {
    pub question: String,
    pub initial_candidates: CandidateTripleSet,
    pub history: HistoryContext,
    pub pools: CumulativePools,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    pub rounds: Vec<RoundSummary>,
    /// Excluded from serialization so replayed results compare byte-identically.
    #[serde(skip)]
    pub timings: Vec<PhaseTimings>,
}

impl IciResult {
    /// `a_1 .. a_T`: the query of every executed round.
    pub fn queries(&self) -> Vec<&str> {
        self.rounds.iter().map(|r| r.query.as_str()).collect()
    }

    pub fn run_log(&self) -> Vec<RoundLog> {
        self.rounds
            .iter()
            .zip(self.timings.iter().chain(std::iter::repeat(&PhaseTimings::default())))
            .map(|(s, t)| RoundLog {
                summary: s.clone(),
                timings: *t,
            })
            .collect()
    }

    pub fn run_log_jsonl(&self) -> String {
        self.run_log()
            .iter()
            .map(|l| serde_json::to_string(l).expect("log serializes") + "\n")
            .collect()
    }

    pub fn total_timings(&self) -> PhaseTimings {
        let mut t = PhaseTimings::default();
        self.timings.iter().for_each(|x| t.add(x));
        t
    }
}

#[derive(Debug, Error)]
pub enum IciError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("extraction failed for {doc_id}: {source}")]
    Extraction {
        doc_id: String,
        #[source]
        source: ExtractionError,
    },
}

/// State reached before a failure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialIci {
    pub history: HistoryContext,
    pub pools: CumulativePools,
    pub rounds: Vec<RoundSummary>,
    pub iterations_used: usize,
}

#[derive(Debug, Error)]
#[error("question aborted after {} round(s): {error}", partial.iterations_used)]
pub struct IciFailure {
    pub error: IciError,
    pub partial: Box<PartialIci>,
}

/// Everything a run needs besides its configuration.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub store: &'a DocumentStore,
    pub retriever: &'a Retriever,
    pub cache: &'a TripleCache,
    pub backend: &'a dyn LlmBackend,
}

struct Construction {
    retrieved: Vec<String>,
    extracted_count: usize,
    candidates: CandidateTripleSet,
    timings: PhaseTimings,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn construct(query: &str, iteration: usize, cfg: &PipelineConfig, sv: &Services<'_>) -> Result<Construction, IciError> {
    let mut timings = PhaseTimings::default();

    let t0 = Instant::now();
    let docs = sv.retriever.retrieve_topk(query, &cfg.retriever, sv.backend)?;
    timings.retrieval_ms = ms(t0);
    let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();

    let t0 = Instant::now();
    let batch = extract_for_documents(&ids, sv.store, Some(sv.cache), sv.backend, cfg.parallel_extraction);
    timings.extraction_ms = ms(t0);
    for (doc_id, err) in batch.failures {
        match err {
            // transport failures abort the question; unparseable output only loses that document
            ExtractionError::Backend(_) => return Err(IciError::Extraction { doc_id, source: err }),
            other => log::warn!("skipping document {doc_id}: {other}"),
        }
    }
    let extracted_count = batch.triples.len();

    let t0 = Instant::now();
    let candidates = if cfg.reranker_enabled {
        rerank_triples(query, &batch.triples, &cfg.retriever, sv.backend, iteration)?
    } else {
        let rank: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let mut all = dedup_triples(&batch.triples);
        all.sort_by_key(|t| (rank[t.doc_id.as_str()], t.sentence_index.is_none(), t.sentence_index));
        CandidateTripleSet {
            query: query.to_owned(),
            iteration,
            triples: all,
        }
    };
    timings.rerank_ms = ms(t0);

    Ok(Construction {
        retrieved: ids,
        extracted_count,
        candidates,
        timings,
    })
}

/// Runs the loop for question `x`, starting from `a_1 = x`.
///
/// Stops when the integrator returns no next query, when both integration
/// attempts fail to parse, or after `cfg.max_iterations` rounds.
pub fn run_ici(x: &str, cfg: &PipelineConfig, sv: &Services<'_>) -> Result<IciResult, IciFailure> {
    assert!(cfg.max_iterations >= 1, "max_iterations must be at least 1");
    let mut history = HistoryContext::new();
    let mut pools = CumulativePools::default();
    let mut rounds: Vec<RoundSummary> = Vec::new();
    let mut timings: Vec<PhaseTimings> = Vec::new();

    macro_rules! bail {
        ($err:expr, $iters:expr) => {
            return Err(IciFailure {
                error: $err.into(),
                partial: Box::new(PartialIci {
                    history,
                    pools,
                    rounds,
                    iterations_used: $iters,
                }),
            })
        };
    }

    let mut current = match construct(x, 1, cfg, sv) {
        Ok(c) => c,
        Err(e) => bail!(e, 0),
    };
    let initial = current.candidates.clone();
    let mut query = x.to_owned();

    for t in 1..=cfg.max_iterations {
        let t0 = Instant::now();
        let outcome = match run_integration(x, &initial, &history, sv.backend, Some(cfg.character_budget_history)) {
            Ok(o) => o,
            Err(e) => bail!(e, t - 1),
        };
        let mut round_timing = current.timings;
        round_timing.integration_ms = ms(t0);

        let decision = outcome.decision;
        let (sents, docs) = project_core(&decision.core_triples);
        pools = update_pools(&pools, &decision.core_triples, &sents, &docs);
        rounds.push(RoundSummary {
            round: t,
            query: query.clone(),
            retrieved: current.retrieved.clone(),
            extracted_count: current.extracted_count,
            candidate_count: current.candidates.len(),
            decision: decision.clone(),
            integration_retries: outcome.retries,
            pools: pools.sizes(),
        });
        timings.push(round_timing);

        let stop = if outcome.safe_terminated {
            Some(StopReason::SafeTermination)
        } else if decision.next_query.is_none() {
            Some(StopReason::NoQuestion)
        } else if t == cfg.max_iterations {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(stop_reason) = stop {
            history.records.push(IterationRecord::new(decision, None));
            return Ok(IciResult {
                question: x.to_owned(),
                initial_candidates: initial,
                history,
                pools,
                iterations_used: t,
                stop_reason,
                rounds,
                timings,
            });
        }

        let next_query = decision.next_query.clone().expect("checked above");
        let next = match construct(&next_query, t + 1, cfg, sv) {
            Ok(c) => c,
            Err(e) => {
                history.records.push(IterationRecord::new(decision, None));
                bail!(e, t)
            }
        };
        history.records.push(IterationRecord::new(decision, Some(next.candidates.clone())));
        current = next;
        query = next_query;
    }
    unreachable!("loop returns by round max_iterations")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, doc: &str, idx: Option<usize>) -> Triple {
        Triple::new(s, "r", "o", doc, idx).unwrap()
    }

    #[test]
    fn project_empty_core() {
        assert_eq!(project_core(&[]), (vec![], vec![]));
    }

    #[test]
    fn project_dedups_same_sentence() {
        let (s, d) = project_core(&[t("a", "d1", Some(0)), t("b", "d1", Some(0))]);
        assert_eq!(s.len(), 1);
        assert_eq!(d, ["d1"]);
    }

    #[test]
    fn project_distinct_docs() {
        let (s, d) = project_core(&[t("a", "d1", Some(2)), t("b", "d2", None)]);
        assert_eq!(d, ["d1", "d2"]);
        assert_eq!(
            s,
            [SentenceRef {
                doc_id: "d1".into(),
                index: 2
            }]
        );
    }

    #[test]
    fn pool_union_semantics() {
        let p0 = CumulativePools::default();
        assert_eq!(update_pools(&p0, &[], &[], &[]), p0);
        let core = [t("a", "d1", Some(0)), t("b", "d2", Some(1))];
        let (s, d) = project_core(&core);
        let p1 = update_pools(&p0, &core, &s, &d);
        let p2 = update_pools(&p1, &core[..1], &s[..1], &d[..1]);
        assert_eq!(p1, p2);
        let extra = [t("c", "d3", Some(0)), t("a", "d1", Some(0))];
        let (s3, d3) = project_core(&extra);
        let p3 = update_pools(&p2, &extra, &s3, &d3);
        assert_eq!(p3.triples.iter().map(|t| t.subject.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(p3.documents, ["d1", "d2", "d3"]);
    }
}
