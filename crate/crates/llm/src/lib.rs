//! Chat-completion access for rationale collection and test-time inference.
//!
//! [`ChatClient`] talks to any OpenAI-compatible endpoint; [`MockOracle`]
//! answers from gold annotations so whole runs work offline. Both implement
//! [`Responder`], which is what the batch [`runner`] drives.

use async_trait::async_trait;
use thiserror::Error;

pub mod client;
mod config;
#[cfg(feature = "mock-server")]
pub mod mock_server;
pub mod oracle;
pub mod runner;

pub use client::ChatClient;
pub use config::EndpointConfig;
pub use oracle::MockOracle;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionRequest {
    pub prompt: String,
    /// Routing tag for the mock oracle; sent as a header, never in the prompt.
    pub correlation_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionResult {
    pub text: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("gave up after {attempts} attempts (last status {}): {last_error}", last_status.map_or("none".to_owned(), |s| s.to_string()))]
    Exhausted { attempts: u32, last_status: Option<u16>, last_error: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingCredential(String),
    #[error("endpoint refused the request with status {status}: {body}")]
    NonRetryable { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("mock oracle: {0}")]
    Oracle(String),
}

#[async_trait]
pub trait Responder: Send + Sync {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, ClientError>;
}
