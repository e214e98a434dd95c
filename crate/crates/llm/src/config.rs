use serde::{Deserialize, Serialize};

use crate::ClientError;

/// Connection and retry settings for one chat-completion endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Prefix of `/chat/completions`, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    /// Per-attempt timeout.
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_base_ms: u64,
    /// Upper bound on any single backoff sleep, including Retry-After.
    pub backoff_cap_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            temperature: 0.0,
            timeout_ms: 60_000,
            max_retries: 3,
            max_in_flight: 4,
            backoff_base_ms: 500,
            backoff_cap_ms: 30_000,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: &str| Err(ClientError::Config(m.to_owned()));
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be a non-negative number");
        }
        if self.base_url.trim().is_empty() {
            return bad("base_url is empty");
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}
