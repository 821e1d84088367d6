use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::artifact::{self, ArtifactError};
use crate::scalar::Scalar;

const KIND: &str = "embedding-cache";

/// One cached vector, keyed by provider name and the text's sha256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub provider: String,
    pub sha256: String,
    pub vector: Vec<f64>,
}

type Key = (String, String);

/// Memoizing wrapper around a provider. Concurrent misses on the same text
/// may both call the inner provider; the values are identical so the last
/// write wins harmlessly.
pub struct CachedProvider<P> {
    inner: P,
    entries: RwLock<HashMap<Key, Vec<f64>>>,
}

fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl<P> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        CachedProvider {
            inner,
            entries: RwLock::new(HashMap::new()),
        }
    }

    /// Wraps `inner` with the records of an existing cache file (missing file = empty cache).
    pub fn load(inner: P, path: &Path) -> Result<Self, ArtifactError> {
        let cache = CachedProvider::new(inner);
        if path.exists() {
            let records: Vec<CacheRecord> = artifact::read_records(path, KIND)?;
            let mut map = cache.entries.write().unwrap();
            for r in records {
                map.insert((r.provider, r.sha256), r.vector);
            }
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        artifact::write_records(path, KIND, &self.records())
    }

    /// All entries sorted by key.
    pub fn records(&self) -> Vec<CacheRecord> {
        let map = self.entries.read().unwrap();
        let sorted: BTreeMap<&Key, &Vec<f64>> = map.iter().collect();
        sorted
            .into_iter()
            .map(|((provider, sha256), vector)| CacheRecord {
                provider: provider.clone(),
                sha256: sha256.clone(),
                vector: vector.clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<S: Scalar, P: EmbeddingProvider<S>> EmbeddingProvider<S> for CachedProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        let name = self.inner.name().to_string();
        let keys: Vec<Key> = texts.iter().map(|t| (name.clone(), text_key(t))).collect();
        let mut misses: Vec<String> = Vec::new();
        {
            let map = self.entries.read().unwrap();
            let mut queued = std::collections::HashSet::new();
            for (t, k) in texts.iter().zip(&keys) {
                if !map.contains_key(k) && queued.insert(k.1.clone()) {
                    misses.push(t.clone());
                }
            }
        }
        if !misses.is_empty() {
            let fresh = self.inner.embed_batch(&misses)?;
            if fresh.len() != misses.len() {
                return Err(EmbeddingError::provider(None, "batch size mismatch"));
            }
            let mut map = self.entries.write().unwrap();
            for (t, v) in misses.iter().zip(fresh) {
                map.insert(
                    (name.clone(), text_key(t)),
                    v.components().iter().map(|c| c.as_f64()).collect(),
                );
            }
        }
        let map = self.entries.read().unwrap();
        Ok(keys
            .iter()
            .map(|k| EmbeddingVector::raw(map[k].iter().map(|c| S::of(*c)).collect()))
            .collect())
    }
}
