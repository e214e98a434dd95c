//! HTTP client for `POST {base_url}/chat/completions`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use reqwest::header::{HeaderMap, RETRY_AFTER};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::{ClientError, CompletionRequest, CompletionResult, EndpointConfig, Responder};

/// Header carrying the correlation id. Real endpoints ignore it.
pub const CORRELATION_HEADER: &str = "x-correlation-id";

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// The JSON body sent for `prompt`.
pub fn request_body(cfg: &EndpointConfig, prompt: &str) -> Vec<u8> {
    serde_json::to_vec(&ChatRequest {
        model: &cfg.model,
        temperature: cfg.temperature,
        messages: [ChatMessage { role: "user", content: prompt }],
    })
    .expect("chat request serializes")
}

/// Extracts `choices[0].message.content`.
pub fn response_text(body: &[u8]) -> Result<String, ClientError> {
    let parsed: ChatResponse =
        serde_json::from_slice(body).map_err(|e| ClientError::Malformed(format!("response body: {e}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ClientError::Malformed("response has no choices".into()))?
        .message
        .content
        .ok_or_else(|| ClientError::Malformed("choices[0].message.content is missing".into()))
}

/// Full-jitter exponential backoff: uniform in `[0, min(cap, base * 2^(retry - 1))]`
/// for the `retry`-th retry (1-based).
pub fn backoff_delay(retry: u32, base_ms: u64, cap_ms: u64, rng: &mut impl Rng) -> Duration {
    let ceiling = base_ms.saturating_mul(1u64 << (retry.saturating_sub(1)).min(32)).min(cap_ms);
    Duration::from_millis(rng.gen_range(0..=ceiling))
}

/// Seconds form of Retry-After. HTTP-date values are ignored.
fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    let secs: f64 = headers.get(RETRY_AFTER)?.to_str().ok()?.trim().parse().ok()?;
    (secs.is_finite() && secs >= 0.0).then(|| Duration::from_secs_f64(secs))
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

enum Attempt {
    Done(String),
    Retry { status: Option<u16>, error: String, wait: Option<Duration> },
}

/// Chat-completion client shared by all workers of a run.
pub struct ChatClient {
    cfg: EndpointConfig,
    http: reqwest::Client,
    api_key: Option<String>,
    permits: Arc<Semaphore>,
    requests: AtomicU64,
}

impl ChatClient {
    /// Reads the credential from `cfg.api_key_env` if one is named.
    pub fn new(cfg: EndpointConfig) -> Result<Self, ClientError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingCredential(var.clone()))?),
            None => None,
        };
        let http = reqwest::Client::builder().build().map_err(|e| ClientError::Config(e.to_string()))?;
        let permits = Arc::new(Semaphore::new(cfg.max_in_flight));
        Ok(ChatClient { cfg, http, api_key, permits, requests: AtomicU64::new(0) })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    async fn attempt(&self, url: &str, body: &[u8], correlation: Option<&str>) -> Result<Attempt, ClientError> {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self
            .http
            .post(url)
            .timeout(Duration::from_millis(self.cfg.timeout_ms))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        if let Some(id) = correlation {
            req = req.header(CORRELATION_HEADER, id);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Ok(Attempt::Retry { status: None, error: e.to_string(), wait: None })
            }
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        let status = resp.status();
        let wait = retry_after(resp.headers());
        let bytes = match resp.bytes().await {
            Ok(b) => b,
            Err(e) if e.is_timeout() => {
                return Ok(Attempt::Retry { status: Some(status.as_u16()), error: e.to_string(), wait: None })
            }
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        if status.is_success() {
            return response_text(&bytes).map(Attempt::Done);
        }
        let snippet: String = String::from_utf8_lossy(&bytes).chars().take(200).collect();
        if retryable(status) {
            Ok(Attempt::Retry { status: Some(status.as_u16()), error: snippet, wait })
        } else {
            Err(ClientError::NonRetryable { status: status.as_u16(), body: snippet })
        }
    }
}

#[async_trait]
impl Responder for ChatClient {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, ClientError> {
        let url = self.cfg.completions_url();
        // serialized once so every attempt sends identical bytes
        let body = request_body(&self.cfg, &req.prompt);
        let started = Instant::now();
        let max_attempts = self.cfg.max_retries + 1;
        let mut last_status = None;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            match self.attempt(&url, &body, req.correlation_id.as_deref()).await? {
                Attempt::Done(text) => {
                    return Ok(CompletionResult { text, latency_ms: started.elapsed().as_millis() as u64, attempts: attempt });
                }
                Attempt::Retry { status, error, wait } => {
                    tracing::debug!(attempt, ?status, %error, "retryable failure");
                    last_status = status;
                    last_error = error;
                    if attempt < max_attempts {
                        let cap = Duration::from_millis(self.cfg.backoff_cap_ms);
                        let delay = match wait {
                            Some(w) => w.min(cap),
                            None => backoff_delay(attempt, self.cfg.backoff_base_ms, self.cfg.backoff_cap_ms, &mut rand::thread_rng()),
                        };
                        tokio::time::sleep(delay).await;
                    }
                }
            }
        }
        Err(ClientError::Exhausted { attempts: max_attempts, last_status, last_error })
    }
}
