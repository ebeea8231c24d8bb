use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, DiskCache, LlmError, LlmRequest, LlmResponse};

pub const DEFAULT_CONCURRENCY: usize = 4;

/// `NO_NETWORK=1` (or `true`) in the environment.
pub fn network_disabled() -> bool {
    std::env::var("NO_NETWORK").is_ok_and(|v| v == "1" || v.eq_ignore_ascii_case("true"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            initial_backoff_ms: 0,
            max_backoff_ms: 0,
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u64::MAX);
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Thread-safe client. Cache hits never reach the backend or count against
/// the concurrency limit.
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    cache: Option<DiskCache>,
    retry: RetryPolicy,
    cache_only: bool,
    limit: Semaphore,
    concurrency: usize,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        LlmClient {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            cache_only: false,
            limit: Semaphore::new(DEFAULT_CONCURRENCY),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self.limit = Semaphore::new(self.concurrency);
        self
    }

    /// Serve from cache only; a miss is an error instead of a backend call.
    pub fn cache_only(mut self, on: bool) -> Self {
        self.cache_only = on;
        self
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }

    pub fn cache(&self) -> Option<&DiskCache> {
        self.cache.as_ref()
    }

    /// Cached response for `request`, if any.
    pub fn lookup(&self, request: &LlmRequest) -> Result<Option<LlmResponse>, LlmError> {
        let Some(cache) = &self.cache else {
            return Ok(None);
        };
        Ok(cache.load(&request.cache_key())?.map(|entry| LlmResponse {
            text: entry.text,
            model: entry.model,
            usage: entry.usage,
            cached: true,
            latency_ms: None,
            retries: 0,
        }))
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        request.validate()?;
        if let Some(hit) = self.lookup(request)? {
            log::debug!("cache hit {}", request.cache_key());
            return Ok(hit);
        }
        if self.cache_only {
            return Err(LlmError::CacheOnlyMiss {
                key: request.cache_key().to_hex(),
            });
        }

        let _permit = self.limit.acquire();
        let mut retries = 0;
        let start = Instant::now();
        let reply = loop {
            match self.backend.call(request) {
                Ok(reply) => break reply,
                Err(e) if e.is_retryable() && retries < self.retry.max_retries => {
                    retries += 1;
                    let delay = self.retry.backoff(retries);
                    log::warn!("attempt {retries} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(final_error(e, retries + 1)),
            }
        };
        let response = LlmResponse {
            text: reply.text,
            model: reply.model.unwrap_or_else(|| request.model.clone()),
            usage: reply.usage,
            cached: false,
            latency_ms: Some(start.elapsed().as_millis() as u64),
            retries,
        };
        if let Some(cache) = &self.cache {
            cache.store(request, &response)?;
        }
        Ok(response)
    }
}

fn final_error(e: BackendError, attempts: u32) -> LlmError {
    match e {
        BackendError::Auth(d) => LlmError::Auth(d),
        BackendError::RateLimited(detail) => LlmError::RateLimited { attempts, detail },
        BackendError::Timeout(detail) => LlmError::Timeout { attempts, detail },
        BackendError::Transient(detail) => LlmError::Exhausted { attempts, detail },
        BackendError::Malformed(d) => LlmError::Malformed(d),
        BackendError::Rejected(d) | BackendError::Unavailable(d) => LlmError::Backend(d),
        BackendError::Unmatched(d) => LlmError::Unmatched(d),
        BackendError::Ambiguous(d) => LlmError::Ambiguous(d),
    }
}
