//! Document retrieval (top-K) and candidate-triple reranking (top-N).
//!
//! Lexical scoring is Okapi BM25 over [`tokenize`]d text:
//!
//! ```text
//! score(D, Q) = Σ_{q ∈ uniq(Q)} idf(q) · tf(q,D)·(k1+1) / (tf(q,D) + k1·(1 − b + b·|D|/avgdl))
//! idf(q)      = ln(1 + (N − df(q) + 0.5) / (df(q) + 0.5))
//! ```
//!
//! Query terms are deduplicated. Embedding scoring ranks by cosine similarity
//! of backend embeddings.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentStore;
use crate::extraction::{CandidateTripleSet, Triple};
use crate::llm::{cosine, BackendError, LlmBackend};
use crate::text::tokenize;

pub const INDEX_FILE: &str = "index.json";
pub const INDEX_FORMAT: &str = "cirag-bm25/1";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("empty query")]
    EmptyQuery,
    #[error("invalid retriever config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("index i/o on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    LexicalBm25,
    EmbeddingCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    /// K: documents retrieved per round.
    pub k_docs: usize,
    /// N: candidate triples kept after reranking.
    pub n_triples: usize,
    pub scorer: ScorerKind,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            k_docs: 10,
            n_triples: 30,
            scorer: ScorerKind::LexicalBm25,
            bm25_k1: 1.2,
            bm25_b: 0.75,
        }
    }
}

impl RetrieverConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k_docs == 0 {
            return Err(RetrievalError::InvalidConfig("k_docs must be at least 1".into()));
        }
        if self.n_triples == 0 {
            return Err(RetrievalError::InvalidConfig("n_triples must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.bm25_b) {
            return Err(RetrievalError::InvalidConfig("bm25_b must lie in [0, 1]".into()));
        }
        if self.bm25_k1.is_nan() || self.bm25_k1 < 0.0 {
            return Err(RetrievalError::InvalidConfig("bm25_k1 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Inverted index with per-document lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    format: String,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    /// term -> [(doc position, term frequency)], positions ascending
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl Bm25Index {
    /// Indexes `title + body` of every document in store order.
    pub fn build(store: &DocumentStore) -> Result<Self, RetrievalError> {
        if store.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let docs = store.documents();
        Ok(Self::from_texts(
            docs.iter().map(|d| d.id.clone()),
            docs.iter().map(|d| format!("{}\n{}", d.title, d.body)),
        ))
    }

    pub fn from_texts(
        ids: impl IntoIterator<Item = String>,
        texts: impl IntoIterator<Item = String>,
    ) -> Self {
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (pos, (id, text)) in ids.into_iter().zip(texts).enumerate() {
            let tokens = tokenize(&text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, f) in tf {
                postings.entry(term).or_default().push((pos as u32, f));
            }
            doc_ids.push(id);
            doc_lengths.push(tokens.len() as u32);
        }
        Self {
            format: INDEX_FORMAT.to_owned(),
            doc_ids,
            doc_lengths,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Documents containing `term` (already normalized), with frequencies.
    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            return 0.0;
        }
        self.doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / self.doc_lengths.len() as f64
    }

    /// BM25 score of every document, in index order.
    pub fn scores(&self, query_tokens: &[String], k1: f64, b: f64) -> Vec<f64> {
        let n = self.doc_ids.len() as f64;
        let avgdl = self.avg_doc_length();
        let mut scores = vec![0.0; self.doc_ids.len()];
        let mut seen = HashSet::new();
        for term in query_tokens {
            if !seen.insert(term.as_str()) {
                continue;
            }
            let posts = self.postings(term);
            if posts.is_empty() {
                continue;
            }
            let df = posts.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for &(pos, tf) in posts {
                let tf = tf as f64;
                let len_ratio = if avgdl > 0.0 {
                    self.doc_lengths[pos as usize] as f64 / avgdl
                } else {
                    1.0
                };
                let denom = tf + k1 * (1.0 - b + b * len_ratio);
                scores[pos as usize] += idf * tf * (k1 + 1.0) / denom;
            }
        }
        scores
    }

    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        let path = dir.join(INDEX_FILE);
        let io = |e: std::io::Error| RetrievalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(io)?;
        let json = serde_json::to_string(self).expect("index serializes");
        fs::write(&path, json).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let path = dir.join(INDEX_FILE);
        let err = |message: String| RetrievalError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        let index: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if index.format != INDEX_FORMAT {
            return Err(err(format!("unsupported index format {:?}", index.format)));
        }
        Ok(index)
    }
}

/// Orders by score descending, then key ascending.
fn by_score_then<K: Ord>(a: (f64, K), b: (f64, K)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// Retriever R: document retrieval and triple reranking.
#[derive(Debug)]
pub struct Retriever {
    index: Bm25Index,
    doc_texts: Vec<String>,
    doc_vectors: Mutex<Option<Vec<Vec<f64>>>>,
}

impl Retriever {
    pub fn new(index: Bm25Index, store: &DocumentStore) -> Self {
        let doc_texts = index
            .doc_ids()
            .iter()
            .map(|id| {
                store
                    .get(id)
                    .map(|d| format!("{}\n{}", d.title, d.body))
                    .unwrap_or_default()
            })
            .collect();
        Self {
            index,
            doc_texts,
            doc_vectors: Mutex::new(None),
        }
    }

    pub fn build(store: &DocumentStore) -> Result<Self, RetrievalError> {
        Ok(Self::new(Bm25Index::build(store)?, store))
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }

    /// Top-K documents for `query`; exactly `min(K, |corpus|)` results.
    pub fn retrieve_topk(
        &self,
        query: &str,
        cfg: &RetrieverConfig,
        backend: &dyn LlmBackend,
    ) -> Result<Vec<ScoredDocument>, RetrievalError> {
        cfg.validate()?;
        let tokens = tokenize(query);
        if tokens.is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let scores = match cfg.scorer {
            ScorerKind::LexicalBm25 => self.index.scores(&tokens, cfg.bm25_k1, cfg.bm25_b),
            ScorerKind::EmbeddingCosine => {
                let q = backend
                    .embed(&[query.to_owned()])?
                    .pop()
                    .ok_or_else(|| BackendError::Decode("no query embedding".into()))?;
                let mut cache = self.doc_vectors.lock().unwrap();
                if cache.is_none() {
                    *cache = Some(backend.embed(&self.doc_texts)?);
                }
                cache.as_ref().unwrap().iter().map(|d| cosine(&q, d)).collect()
            }
        };
        let ids = self.index.doc_ids();
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| by_score_then((scores[a], &ids[a]), (scores[b], &ids[b])));
        Ok(order
            .into_iter()
            .take(cfg.k_docs)
            .enumerate()
            .map(|(r, i)| ScoredDocument {
                doc_id: ids[i].clone(),
                score: scores[i],
                rank: r + 1,
            })
            .collect())
    }
}

/// Deduplicates `triples` by normalized serialization (first occurrence wins),
/// scores each against `query` and keeps the top N.
///
/// Ties break by (doc_id, sentence index, serialization).
pub fn rerank_triples(
    query: &str,
    triples: &[Triple],
    cfg: &RetrieverConfig,
    backend: &dyn LlmBackend,
    iteration: usize,
) -> Result<CandidateTripleSet, RetrievalError> {
    cfg.validate()?;
    let unique = dedup_triples(triples);
    let scores: Vec<f64> = match cfg.scorer {
        ScorerKind::LexicalBm25 => {
            let index = Bm25Index::from_texts(
                (0..unique.len()).map(|i| i.to_string()),
                unique.iter().map(|t| t.serialized()),
            );
            index.scores(&tokenize(query), cfg.bm25_k1, cfg.bm25_b)
        }
        ScorerKind::EmbeddingCosine => {
            if unique.is_empty() {
                Vec::new()
            } else {
                let mut texts = vec![query.to_owned()];
                texts.extend(unique.iter().map(|t| t.serialized()));
                let vecs = backend.embed(&texts)?;
                vecs[1..].iter().map(|v| cosine(&vecs[0], v)).collect()
            }
        }
    };
    let mut order: Vec<usize> = (0..unique.len()).collect();
    order.sort_by(|&a, &b| {
        by_score_then((scores[a], unique[a].tie_key()), (scores[b], unique[b].tie_key()))
    });
    Ok(CandidateTripleSet {
        query: query.to_owned(),
        iteration,
        triples: order
            .into_iter()
            .take(cfg.n_triples)
            .map(|i| unique[i].clone())
            .collect(),
    })
}

/// Set semantics over normalized serialization, preserving first occurrence.
pub fn dedup_triples(triples: &[Triple]) -> Vec<Triple> {
    let mut seen = HashSet::new();
    triples
        .iter()
        .filter(|t| seen.insert(t.normalized.clone()))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::llm::{ReplayBackend, ReplayScript};

    fn backend() -> ReplayBackend {
        ReplayBackend::new(ReplayScript::default()).unwrap()
    }

    fn store(docs: &[(&str, &str, &str)]) -> DocumentStore {
        DocumentStore::from_documents(docs.iter().map(|(i, t, b)| Document::new(*i, *t, *b)).collect()).unwrap()
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            Bm25Index::build(&DocumentStore::default()),
            Err(RetrievalError::EmptyCorpus)
        ));
    }

    #[test]
    fn single_document_retrievable_by_any_token() {
        let s = store(&[("d1", "Montebello", "A village in Rockland County.")]);
        let idx = Bm25Index::build(&s).unwrap();
        for tok in ["montebello", "village", "rockland", "county", "a", "in"] {
            assert_eq!(idx.postings(tok), &[(0, 1)], "{tok}");
        }
        assert!(idx.postings("absent").is_empty());
    }

    #[test]
    fn rare_term_ranks_containing_document_first() {
        // Hand computation, k1 = 1.2, b = 0.75, N = 3.
        // "zebra" occurs once, in d2 only (df = 1): idf = ln(1 + 2.5/1.5) = ln(8/3).
        // Lengths: d1 = 4, d2 = 4, d3 = 4 -> avgdl = 4, length ratio 1.
        // score(d2) = ln(8/3) * 1 * 2.2 / (1 + 1.2) = ln(8/3) ≈ 0.980829
        let s = store(&[
            ("d1", "", "the cat sat down"),
            ("d2", "", "the zebra sat down"),
            ("d3", "", "a dog ran off"),
        ]);
        let r = Retriever::build(&s).unwrap();
        let out = r.retrieve_topk("zebra", &RetrieverConfig::default(), &backend()).unwrap();
        assert_eq!(out[0].doc_id, "d2");
        assert!((out[0].score - (8.0f64 / 3.0).ln()).abs() < 1e-12);
        assert_eq!(out[1].score, 0.0);
    }

    #[test]
    fn k_larger_than_corpus_returns_all_ranked() {
        let s = store(&[("b", "", "x y"), ("a", "", "x"), ("c", "", "z")]);
        let r = Retriever::build(&s).unwrap();
        let out = r.retrieve_topk("x", &RetrieverConfig::default(), &backend()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.iter().map(|d| d.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn equal_scores_break_ties_by_doc_id() {
        let s = store(&[("d9", "", "same text"), ("d1", "", "same text"), ("d5", "", "same text")]);
        let r = Retriever::build(&s).unwrap();
        let out = r.retrieve_topk("same", &RetrieverConfig::default(), &backend()).unwrap();
        assert_eq!(out.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), ["d1", "d5", "d9"]);
    }

    #[test]
    fn punctuation_only_query_is_empty() {
        let s = store(&[("d1", "", "text")]);
        let r = Retriever::build(&s).unwrap();
        assert!(matches!(
            r.retrieve_topk("?!", &RetrieverConfig::default(), &backend()),
            Err(RetrievalError::EmptyQuery)
        ));
    }

    #[test]
    fn embedding_scorer_uses_backend_vectors() {
        let s = store(&[("d1", "", "alpha beta"), ("d2", "", "gamma delta")]);
        let r = Retriever::build(&s).unwrap();
        let cfg = RetrieverConfig {
            scorer: ScorerKind::EmbeddingCosine,
            ..RetrieverConfig::default()
        };
        let out = r.retrieve_topk("gamma delta", &cfg, &backend()).unwrap();
        assert_eq!(out[0].doc_id, "d2");
        // no fallback -> backend error propagates
        let strict = ReplayBackend::new(ReplayScript {
            hash_embedding_fallback: false,
            ..ReplayScript::default()
        })
        .unwrap();
        let r2 = Retriever::build(&s).unwrap();
        assert!(matches!(r2.retrieve_topk("gamma", &cfg, &strict), Err(RetrievalError::Backend(_))));
    }

    #[test]
    fn index_persists_with_format_tag() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(&[("d1", "T", "alpha beta")]);
        let idx = Bm25Index::build(&s).unwrap();
        idx.save(dir.path()).unwrap();
        assert_eq!(Bm25Index::load(dir.path()).unwrap(), idx);
        let raw = fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap();
        fs::write(dir.path().join(INDEX_FILE), raw.replace(INDEX_FORMAT, "other/9")).unwrap();
        assert!(Bm25Index::load(dir.path()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = RetrieverConfig {
            bm25_b: 1.5,
            ..RetrieverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RetrieverConfig {
            k_docs: 0,
            ..RetrieverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn t(s: &str, r: &str, o: &str, doc: &str, sent: Option<usize>) -> Triple {
        Triple::new(s, r, o, doc, sent).unwrap()
    }

    #[test]
    fn rerank_keeps_all_when_n_exceeds_input_and_dedups() {
        let triples = vec![
            t("dan milne", "is", "british actor", "d3", Some(0)),
            t("god s gift to women", "directed by", "michael curtiz", "d1", Some(0)),
            t("God's Gift to Women", "directed by", "Michael Curtiz", "d1", Some(1)),
        ];
        let out =
            rerank_triples("director of God's Gift to Women", &triples, &RetrieverConfig::default(), &backend(), 1)
                .unwrap();
        assert_eq!(out.triples.len(), 2);
        assert_eq!(out.triples[0].normalized, "(god s gift to women, directed by, michael curtiz)");
        assert_eq!(out.triples[1].subject, "dan milne");
        // first occurrence kept
        assert_eq!(out.triples[0].sentence_index, Some(0));
    }

    #[test]
    fn rerank_truncates_to_n_with_tie_order() {
        let triples = vec![
            t("x", "r", "c", "d2", Some(0)),
            t("x", "r", "b", "d1", Some(1)),
            t("x", "r", "a", "d1", Some(1)),
            t("x", "r", "z", "d1", Some(0)),
        ];
        let cfg = RetrieverConfig {
            n_triples: 3,
            ..RetrieverConfig::default()
        };
        let out = rerank_triples("unrelated", &triples, &cfg, &backend(), 1).unwrap();
        let objs: Vec<_> = out.triples.iter().map(|t| t.object.as_str()).collect();
        assert_eq!(objs, ["z", "a", "b"]);
    }
}
