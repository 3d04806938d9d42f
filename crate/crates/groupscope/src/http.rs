//! HTTP embedding backend and LLM transport.

use std::time::Duration;

use groupscope_core::embedding::{EmbedError, Embedding, EmbeddingBackend, EmbeddingVector};
use groupscope_core::extract::{with_retries, LlmRequest, LlmTransport, RetryPolicy, TransportError};
use groupscope_core::text::normalize;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

pub const EMBED_TOKEN_ENV: &str = "GROUPSCOPE_EMBED_TOKEN";
pub const LLM_TOKEN_ENV: &str = "GROUPSCOPE_LLM_TOKEN";

fn client(timeout: Duration) -> Client {
    Client::builder()
        .timeout(timeout)
        .build()
        .expect("HTTP client builds")
}

/// Maps a request outcome onto the retry classes: timeouts, connection
/// errors, 429 and 5xx are transient.
fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    client: &Client,
    url: &str,
    token: Option<&str>,
    body: &B,
) -> Result<R, TransportError> {
    let mut req = client.post(url).json(body);
    if let Some(t) = token {
        req = req.bearer_auth(t);
    }
    let resp = req.send().map_err(|e| {
        if e.is_timeout() || e.is_connect() || e.is_request() {
            TransportError::Transient(e.to_string())
        } else {
            TransportError::Permanent(e.to_string())
        }
    })?;
    let status = resp.status();
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        return Err(TransportError::Transient(format!("HTTP {status}")));
    }
    if !status.is_success() {
        return Err(TransportError::Permanent(format!("HTTP {status}")));
    }
    resp.json::<R>()
        .map_err(|e| TransportError::Permanent(format!("malformed response body: {e}")))
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Posts `{"inputs": [...]}` and expects `{"vectors": [[...], ...]}` in
/// input order.
pub struct HttpEmbedder {
    pub url: String,
    pub token: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub policy: RetryPolicy,
    client: Client,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, batch_size: usize, max_in_flight: usize, timeout: Duration) -> Self {
        HttpEmbedder {
            url: url.into(),
            token: std::env::var(EMBED_TOKEN_ENV).ok(),
            batch_size: batch_size.max(1),
            max_in_flight: max_in_flight.max(1),
            policy: RetryPolicy::default(),
            client: client(timeout),
        }
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = EmbedRequest { inputs: batch };
        let mut sleep = |d: Duration| std::thread::sleep(d);
        let (resp, _) = with_retries(&self.policy, &mut sleep, || {
            post_json::<_, EmbedResponse>(&self.client, &self.url, self.token.as_deref(), &body)
        })
        .map_err(|(e, _)| EmbedError::Transport {
            batch: batch.to_vec(),
            message: e.to_string(),
        })?;
        if resp.vectors.len() != batch.len() {
            return Err(EmbedError::Transport {
                batch: batch.to_vec(),
                message: format!("expected {} vectors, got {}", batch.len(), resp.vectors.len()),
            });
        }
        Ok(resp.vectors)
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn backend_id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn embed(&self, phrases: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        let keys: Vec<String> = phrases
            .iter()
            .map(|p| {
                let n = normalize(p);
                if n.is_empty() {
                    Err(EmbedError::EmptyPhrase(p.clone()))
                } else {
                    Ok(n)
                }
            })
            .collect::<Result<_, _>>()?;
        let batches: Vec<&[String]> = keys.chunks(self.batch_size).collect();
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(keys.len());
        // Waves of at most `max_in_flight` concurrent batches; results are
        // collected in batch order.
        for wave in batches.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>, EmbedError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|b| s.spawn(move || self.embed_batch(b))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for r in results {
                vectors.extend(r?);
            }
        }
        let id = self.backend_id();
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        keys.into_iter()
            .zip(vectors)
            .map(|(phrase, vector)| {
                if vector.len() != dim || dim < 2 {
                    return Err(EmbedError::DimensionMismatch {
                        phrase,
                        expected: dim,
                        got: vector.len(),
                    });
                }
                if vector.iter().any(|x| !x.is_finite()) {
                    return Err(EmbedError::NonFinite(phrase));
                }
                Ok(Embedding::Vector(EmbeddingVector {
                    phrase,
                    vector,
                    backend_id: id.clone(),
                }))
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Posts `{"prompt","temperature","max_tokens"}` and reads `{"text"}`.
/// Retries are left to the caller.
pub struct HttpLlm {
    pub url: String,
    pub token: Option<String>,
    client: Client,
}

impl HttpLlm {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpLlm {
            url: url.into(),
            token: std::env::var(LLM_TOKEN_ENV).ok(),
            client: client(timeout),
        }
    }
}

impl LlmTransport for HttpLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String, TransportError> {
        post_json::<_, CompletionResponse>(&self.client, &self.url, self.token.as_deref(), request).map(|r| r.text)
    }
}
