use sha2::{Digest, Sha256};

use crate::text::tokenize;

pub const HASH_EMBEDDING_DIM: usize = 256;

/// Deterministic token-hashing embedder.
///
/// NOT semantic: each token is hashed into one signed bucket of a fixed-size
/// vector which is then L2-normalized. It exists so embedding-scored code
/// paths run offline.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self {
            dim: HASH_EMBEDDING_DIM,
        }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; self.dim];
        for tok in tokenize(text) {
            let digest = Sha256::digest(tok.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % self.dim;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            // empty text: fixed unit vector so cosine stays defined
            v[0] = 1.0;
        }
        v
    }

    pub fn embed(&self, texts: &[String]) -> Vec<Vec<f64>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
