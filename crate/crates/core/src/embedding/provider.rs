use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_bytes;

/// Failure reported by an embedding backend. Retried by the batcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderError(pub String);

impl std::fmt::Display for ProviderError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Embeds a batch; must return one vector per input text, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

/// Deterministic offline embedder: a hashed bag of words. Every lower-cased
/// alphanumeric token adds 1.0 to two hashed buckets, so vectors are
/// non-negative and texts sharing vocabulary score high.
#[derive(Debug)]
pub struct MockEmbedder {
    dim: usize,
    model: String,
    calls: AtomicUsize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        MockEmbedder {
            dim,
            model: format!("hashed-bow-{dim}"),
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `embed` calls made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut out = vec![0.0f32; self.dim];
        for token in tokens(text) {
            let h = sha256_bytes(token.as_bytes());
            let a = u64::from_le_bytes(h[0..8].try_into().unwrap()) as usize % self.dim;
            let b = u64::from_le_bytes(h[8..16].try_into().unwrap()) as usize % self.dim;
            out[a] += 1.0;
            out[b] += 1.0;
        }
        out
    }
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

impl EmbeddingProvider for MockEmbedder {
    fn provider_id(&self) -> &str {
        "mock"
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    url: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    /// `base_url` may be the full endpoint or a base to which `/embeddings`
    /// is appended.
    pub fn new(base_url: &str, api_key: Option<String>, model: &str, dim: usize) -> Self {
        let trimmed = base_url.trim_end_matches('/');
        let url = if trimmed.ends_with("/embeddings") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/embeddings")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("http client");
        HttpEmbedder {
            url,
            api_key,
            model: model.to_string(),
            dim,
            client,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn provider_id(&self) -> &str {
        "openai-compatible"
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let mut req = self.client.post(&self.url).json(&EmbeddingRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(ProviderError(format!("HTTP {status}: {body}")));
        }
        let mut parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| ProviderError(format!("bad embeddings response: {e}")))?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        if parsed.data.len() != texts.len() {
            return Err(ProviderError(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic_and_nonnegative() {
        let m = MockEmbedder::new(64);
        let a = m.embed_one("Die Prämien steigen, die Prämien!");
        let b = m.embed_one("die prämien steigen die prämien");
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x >= 0.0));
        assert_eq!(a.iter().sum::<f32>(), 10.0);
    }

    #[test]
    fn mock_empty_text_is_zero() {
        let m = MockEmbedder::new(16);
        assert!(m.embed_one(" -- ").iter().all(|&x| x == 0.0));
    }
}
