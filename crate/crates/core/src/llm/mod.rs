//! Chat-completion client: request validation, on-disk response cache,
//! retries with exponential backoff, bounded concurrency, and pluggable
//! backends (OpenAI-compatible HTTP, scripted mock, echo mock).

mod cache;
mod client;
mod http;
mod mock;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, DiskCache};
pub use client::{network_disabled, LlmClient, RetryPolicy, DEFAULT_CONCURRENCY};
pub use http::{ApiKey, OpenAiBackend, DEFAULT_TIMEOUT};
pub use mock::{essay_digest, EchoBackend, FnBackend, Matcher, MockBackend, MockRule, MockScript};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        LlmRequest {
            model: model.into(),
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be > 0".into()));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::InvalidRequest("model name is empty".into()));
        }
        Ok(())
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub model: String,
    pub usage: Option<Usage>,
    pub cached: bool,
    pub latency_ms: Option<u64>,
    /// Failed attempts before this response was obtained.
    pub retries: u32,
}

/// SHA-256 over a length-prefixed encoding of the request tuple.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(pub [u8; 32]);

impl CacheKey {
    pub fn of(request: &LlmRequest) -> Self {
        let mut h = Sha256::new();
        h.update(b"essay-scorer/llm-cache/v1");
        for field in [request.model.as_bytes(), request.prompt.as_bytes()] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field);
        }
        // -0.0 and 0.0 are the same temperature.
        let temperature = if request.temperature == 0.0 {
            0.0
        } else {
            request.temperature
        };
        h.update(temperature.to_bits().to_le_bytes());
        h.update(request.max_tokens.to_le_bytes());
        CacheKey(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({})", self.to_hex())
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// What a backend returns for one successful call.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub model: Option<String>,
    pub usage: Option<Usage>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        BackendReply {
            text: text.into(),
            model: None,
            usage: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("malformed backend payload: {0}")]
    Malformed(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("no mock rule matches prompt starting {0:?}")]
    Unmatched(String),
    #[error("mock rules {0} match the same prompt with equal priority")]
    Ambiguous(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited(_) | BackendError::Timeout(_) | BackendError::Transient(_)
        )
    }
}

pub trait Backend: Send + Sync {
    fn call(&self, request: &LlmRequest) -> Result<BackendReply, BackendError>;

    /// Whether calls leave the process.
    fn is_remote(&self) -> bool {
        false
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts: {detail}")]
    RateLimited { attempts: u32, detail: String },
    #[error("timed out after {attempts} attempts: {detail}")]
    Timeout { attempts: u32, detail: String },
    #[error("backend failed after {attempts} attempts: {detail}")]
    Exhausted { attempts: u32, detail: String },
    #[error("malformed backend payload: {0}")]
    Malformed(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("cache miss for {key} with network disabled")]
    CacheOnlyMiss { key: String },
    #[error("cache file {path}: {detail}")]
    Cache { path: PathBuf, detail: String },
    #[error("no mock rule matches prompt starting {0:?}")]
    Unmatched(String),
    #[error("mock rules {0} match the same prompt with equal priority")]
    Ambiguous(String),
    #[error("invalid mock script: {0}")]
    Script(String),
}
