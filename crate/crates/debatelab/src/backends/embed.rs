//! Embedding providers for the answer-diversity metric.

use super::BackendError;
use crate::domain::fnv1a;
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Fixed-length embedding of one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

/// Cosine similarity; zero vectors compare as 0.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let norm_a: f64 = a.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        0.0
    } else {
        dot / (norm_a * norm_b)
    }
}

/// A provider of sentence embeddings; the model behind it is pluggable.
#[async_trait]
pub trait Embedder: Send + Sync {
    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError>;
}

/// Deterministic offline fallback: hashes the token multiset of a text into
/// a fixed-dimension count vector. Identical texts embed identically and
/// token-disjoint texts are orthogonal (up to hash collisions).
pub struct CountVectorEmbedder {
    dimension: usize,
}

impl Default for CountVectorEmbedder {
    fn default() -> Self {
        Self { dimension: 512 }
    }
}

impl CountVectorEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        Self { dimension }
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dimension];
        for token in text.split_whitespace() {
            let token = token.to_lowercase();
            let bucket = (fnv1a(token.as_bytes()) % self.dimension as u64) as usize;
            values[bucket] += 1.0;
        }
        EmbeddingVector(values)
    }
}

#[async_trait]
impl Embedder for CountVectorEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        Ok(texts.iter().map(|text| self.embed_one(text)).collect())
    }
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Speaks `POST {base_url}/embeddings` with `{model, input}`.
pub struct HttpEmbedder {
    client: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: std::env::var(super::http::API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

#[async_trait]
impl Embedder for HttpEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        let url = format!("{}/embeddings", self.base_url);
        let mut builder = self
            .client
            .post(&url)
            .json(&json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(BackendError::Transport(format!("{} from {url}", response.status())));
        }
        let parsed: EmbeddingResponse =
            response.json().await.map_err(|e| BackendError::Protocol(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(BackendError::Protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        Ok(parsed.data.into_iter().map(|d| EmbeddingVector(d.embedding)).collect())
    }
}
