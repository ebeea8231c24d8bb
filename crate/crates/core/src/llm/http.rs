use std::fmt;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, BackendReply, LlmError, LlmRequest, Usage};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Bearer credential. Never printed: `Debug` and `Display` show a mask.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    /// Reads the key from the environment variable `var`.
    pub fn from_env(var: &str) -> Result<Self, LlmError> {
        match std::env::var(var) {
            Ok(v) if !v.trim().is_empty() => Ok(ApiKey(v.trim().to_string())),
            _ => Err(LlmError::Auth(format!(
                "environment variable {var} is unset or empty"
            ))),
        }
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

impl fmt::Display for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

/// OpenAI-compatible chat-completions endpoint. The prompt goes out as a
/// single user message; sampling parameters other than temperature and
/// max_tokens are left to the server.
#[derive(Debug)]
pub struct OpenAiBackend {
    url: String,
    api_key: Option<ApiKey>,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    model: Option<String>,
    choices: Vec<Choice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiBackend {
    /// `endpoint` is the API base, e.g. `https://api.openai.com/v1` or
    /// `http://localhost:8000/v1`.
    pub fn new(
        endpoint: &str,
        api_key: Option<ApiKey>,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Backend(format!("cannot build HTTP client: {e}")))?;
        Ok(OpenAiBackend {
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            api_key,
            http,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn status_error(status: reqwest::StatusCode, body: &str) -> BackendError {
    let snippet: String = body.chars().take(200).collect();
    let detail = format!("HTTP {status}: {snippet}");
    match status.as_u16() {
        401 | 403 => BackendError::Auth(format!("HTTP {status}")),
        408 => BackendError::Timeout(detail),
        429 => BackendError::RateLimited(detail),
        500..=599 => BackendError::Transient(detail),
        _ => BackendError::Rejected(detail),
    }
}

impl Backend for OpenAiBackend {
    fn call(&self, request: &LlmRequest) -> Result<BackendReply, BackendError> {
        let body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut builder = self.http.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key.expose());
        }
        let response = builder.send().map_err(|e| {
            let e = e.without_url();
            if e.is_timeout() {
                BackendError::Timeout(e.to_string())
            } else {
                BackendError::Transient(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transient(e.without_url().to_string()))?;
        if !status.is_success() {
            return Err(status_error(status, &text));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Malformed("no choices in response".into()))?;
        Ok(BackendReply {
            text: choice.message.content.unwrap_or_default(),
            model: parsed.model,
            usage: parsed.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }

    fn is_remote(&self) -> bool {
        true
    }
}
