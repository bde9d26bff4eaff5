//! Embedding service contract, the deterministic mock used for offline runs
//! and tests, and the HTTP client for a remote embedder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::tokenize;

/// Embedding service contract. Implementations must return one vector per
/// input text, all of length `dim()`.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String], instruction: Option<&str>) -> Result<Vec<Vec<f32>>>;
    fn dim(&self) -> usize;
    fn tag(&self) -> &str;
}

/// Deterministic hashed bag-of-tokens embedder: each token is hashed to a
/// coordinate, counts accumulated, vector L2-normalized. Keeps end-to-end
/// runs reproducible without any model.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    tag: String,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        MockEmbedder {
            dim,
            tag: format!("mock-bow-{dim}"),
        }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder::new(256)
    }
}

/// FNV-1a, stable across platforms and runs.
fn fnv1a(token: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in token.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String], instruction: Option<&str>) -> Result<Vec<Vec<f32>>> {
        // The instruction participates in hashing like any other text so that
        // instructed and plain queries land in distinguishable subspaces.
        let _ = instruction;
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0f32; self.dim];
                for token in tokenize(text) {
                    let idx = (fnv1a(&token) % self.dim as u64) as usize;
                    v[idx] += 1.0;
                }
                l2_normalize(&mut v);
                v
            })
            .collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}

/// Normalize in place; zero vectors are left as zeros.
pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    instruction: Option<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f32>,
}

/// HTTP JSON embedder client with bounded retries and bearer-token auth
/// taken from an environment variable.
pub struct HttpEmbedder {
    endpoint: String,
    dim: usize,
    tag: String,
    client: reqwest::blocking::Client,
    auth_token: Option<String>,
    max_retries: usize,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        dim: usize,
        auth_env_var: Option<&str>,
        timeout: std::time::Duration,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::transport("embedder", e.to_string()))?;
        let auth_token = auth_env_var.and_then(|var| std::env::var(var).ok());
        Ok(HttpEmbedder {
            tag: format!("http:{endpoint}"),
            endpoint,
            dim,
            client,
            auth_token,
            max_retries: 2,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String], instruction: Option<&str>) -> Result<Vec<Vec<f32>>> {
        let body = EmbedRequest {
            input: texts,
            instruction,
        };
        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(200 * attempt as u64));
            }
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.auth_token {
                req = req.bearer_auth(token);
            }
            match req.send().and_then(|r| r.error_for_status()) {
                Ok(resp) => {
                    let parsed: EmbedResponse = resp
                        .json()
                        .map_err(|e| Error::transport("embedder", e.to_string()))?;
                    if parsed.data.len() != texts.len() {
                        return Err(Error::transport(
                            "embedder",
                            format!(
                                "expected {} embeddings, got {}",
                                texts.len(),
                                parsed.data.len()
                            ),
                        ));
                    }
                    let mut out = Vec::with_capacity(parsed.data.len());
                    for item in parsed.data {
                        if item.embedding.len() != self.dim {
                            return Err(Error::DimensionMismatch {
                                expected: self.dim,
                                got: item.embedding.len(),
                            });
                        }
                        out.push(item.embedding);
                    }
                    return Ok(out);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::transport("embedder", last_err))
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}
