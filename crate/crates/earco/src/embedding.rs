//! Text embedding backends.
//!
//! The retrieval pipeline encodes `title + " " + cleaned_summary` into a
//! fixed-dimension vector. Which encoder produces the vector is a
//! deployment concern, so the backend is pluggable:
//!
//! - [`HashEmbeddingBackend`] is the shipped test backend. It hashes
//!   character n-grams (n = 1..=3 over UTF-8 bytes) into signed buckets
//!   and L2-normalizes, which is deterministic across runs and platforms.
//!   The empty string maps to the all-zeros vector.
//! - [`HttpEmbeddingBackend`] is a remote embeddings endpoint speaking the
//!   common `{"input": [...]}` / `{"data": [{"embedding": [...]}]}` wire
//!   schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incident::Incident;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding protocol error: {0}")]
    Protocol(String),
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("vector component at position {position} is not finite")]
    NonFinite { position: usize },
}

/// A fixed-length vector of finite f32 components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if let Some(position) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { position });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Euclidean distance, accumulated in f64 component order.
    pub fn l2_distance(&self, other: &EmbeddingVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

pub trait EmbeddingBackend: Send + Sync {
    /// Declared output dimension; every returned vector has this length.
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Retrieval query text for an incident: title and cleaned summary joined
/// by a single space; an empty summary degrades to the title alone.
pub fn query_text(incident: &Incident) -> String {
    let summary = incident.effective_summary();
    if summary.is_empty() {
        incident.title.clone()
    } else {
        format!("{} {}", incident.title, summary)
    }
}

/// Deterministic hashed-n-gram embedding used for offline tests.
#[derive(Debug, Clone)]
pub struct HashEmbeddingBackend {
    dim: usize,
}

impl HashEmbeddingBackend {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl EmbeddingBackend for HashEmbeddingBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut values = vec![0.0f32; self.dim];
        let bytes = text.as_bytes();
        for n in 1..=3usize {
            if bytes.len() < n {
                continue;
            }
            for gram in bytes.windows(n) {
                let h = fnv1a64(gram);
                let bucket = (h % self.dim as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                values[bucket] += sign;
            }
        }
        let norm = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (*v as f64 / norm) as f32;
            }
        }
        EmbeddingVector::new(values)
    }
}

fn fnv1a64(data: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in data {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Remote embeddings endpoint.
pub struct HttpEmbeddingBackend {
    url: String,
    api_key: Option<String>,
    model: Option<String>,
    dim: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbeddingWireRequest<'a> {
    input: [&'a str; 1],
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingWireResponse {
    data: Vec<EmbeddingWireItem>,
}

#[derive(Deserialize)]
struct EmbeddingWireItem {
    embedding: Vec<f32>,
}

impl HttpEmbeddingBackend {
    pub fn new(url: String, api_key: Option<String>, model: Option<String>, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(120)))
            .build()
            .new_agent();
        Self { url, api_key, model, dim, agent }
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let body =
            EmbeddingWireRequest { input: [text], model: self.model.as_deref() };
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(&body)
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(EmbeddingError::Transport(format!(
                "embedding endpoint returned status {}",
                response.status()
            )));
        }
        let parsed: EmbeddingWireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::Protocol(e.to_string()))?;
        let item = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbeddingError::Protocol("empty data array".to_string()))?;
        if item.embedding.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                expected: self.dim,
                got: item.embedding.len(),
            });
        }
        EmbeddingVector::new(item.embedding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_all_zeros() {
        let backend = HashEmbeddingBackend::new(8);
        let v = backend.embed("").unwrap();
        assert_eq!(v.dim(), 8);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_for_same_text() {
        let backend = HashEmbeddingBackend::new(8);
        assert_eq!(backend.embed("db timeout").unwrap(), backend.embed("db timeout").unwrap());
    }

    #[test]
    fn whitespace_sensitive() {
        let backend = HashEmbeddingBackend::new(8);
        let a = backend.embed("db timeout").unwrap();
        let b = backend.embed("db timeout ").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn output_has_declared_dim_and_unit_norm() {
        let backend = HashEmbeddingBackend::new(16);
        let v = backend.embed("certificate expired on frontend pool").unwrap();
        assert_eq!(v.dim(), 16);
        let norm: f64 = v.values().iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn query_text_joins_title_and_summary() {
        let mut i = crate::incident::tests::incident("a", 1);
        i.title = "DB outage".to_string();
        i.cleaned_summary = "primary down".to_string();
        assert_eq!(query_text(&i), "DB outage primary down");
        i.cleaned_summary.clear();
        i.raw_summary.clear();
        assert_eq!(query_text(&i), "DB outage");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f32::NAN]),
            Err(EmbeddingError::NonFinite { position: 1 })
        ));
    }
}
