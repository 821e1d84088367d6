use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::scalar::Scalar;

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Deterministic offline provider: signed feature hashing of tokens.
///
/// Every token is hashed (sha256 over the seed and the token) to a bucket
/// and a sign; bucket sums are L2-normalized. Text without tokens maps to
/// the zero vector.
#[derive(Debug, Clone)]
pub struct HashingProvider {
    name: String,
    dimension: usize,
    seed: u64,
}

impl HashingProvider {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashingProvider {
            name: format!("hashing-d{dimension}-s{seed}"),
            dimension,
            seed,
        }
    }

    fn slot(&self, token: &str) -> (usize, bool) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let d = h.finalize();
        let bucket = u64::from_le_bytes(d[0..8].try_into().unwrap());
        ((bucket % self.dimension as u64) as usize, d[8] & 1 == 1)
    }

    pub fn embed_one<S: Scalar>(&self, text: &str) -> EmbeddingVector<S> {
        let mut acc = vec![S::zero(); self.dimension];
        for tok in tokenize(text) {
            let (i, negative) = self.slot(&tok);
            if negative {
                acc[i] -= S::one();
            } else {
                acc[i] += S::one();
            }
        }
        EmbeddingVector::normalized(acc)
    }
}

impl<S: Scalar> EmbeddingProvider<S> for HashingProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
