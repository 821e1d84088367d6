use std::time::Duration;

use serde::Deserialize;

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::scalar::Scalar;

/// Remote embedding service.
///
/// Wire format: `POST <endpoint>` with a JSON array of strings as the body;
/// the reply is a JSON array of float arrays (or `{"embeddings": [...]}`),
/// one per input, all of the configured dimension. Inputs are sent in
/// chunks of `batch_size`.
pub struct HttpProvider {
    name: String,
    endpoint: String,
    auth: Option<(String, String)>,
    dimension: usize,
    batch_size: usize,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    Bare(Vec<Vec<f64>>),
    Wrapped { embeddings: Vec<Vec<f64>> },
}

impl HttpProvider {
    /// `auth` is a (header name, header value) pair sent with every request.
    pub fn new(
        name: impl Into<String>,
        endpoint: impl Into<String>,
        auth: Option<(String, String)>,
        dimension: usize,
        batch_size: usize,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpProvider {
            name: name.into(),
            endpoint: endpoint.into(),
            auth,
            dimension,
            batch_size: batch_size.max(1),
            agent,
        }
    }

    fn post(&self, chunk: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let first = chunk.first().map(String::as_str);
        let mut req = self.agent.post(&self.endpoint);
        if let Some((h, v)) = &self.auth {
            req = req.header(h.as_str(), v.as_str());
        }
        let mut resp = req
            .send_json(chunk)
            .map_err(|e| EmbeddingError::provider(first, e.to_string()))?;
        let reply: Reply = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::provider(first, format!("bad reply: {e}")))?;
        let vectors = match reply {
            Reply::Bare(v) | Reply::Wrapped { embeddings: v } => v,
        };
        if vectors.len() != chunk.len() {
            return Err(EmbeddingError::provider(
                first,
                format!("sent {} texts, got {} vectors", chunk.len(), vectors.len()),
            ));
        }
        for (text, v) in chunk.iter().zip(&vectors) {
            if v.len() != self.dimension {
                return Err(EmbeddingError::provider(
                    Some(text),
                    format!("expected dimension {}, got {}", self.dimension, v.len()),
                ));
            }
        }
        Ok(vectors)
    }
}

impl<S: Scalar> EmbeddingProvider<S> for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            for v in self.post(chunk)? {
                out.push(EmbeddingVector::normalized(
                    v.into_iter().map(S::of).collect(),
                ));
            }
        }
        Ok(out)
    }
}
