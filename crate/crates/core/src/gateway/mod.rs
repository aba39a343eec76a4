//! Chat-completion access with persistent caching, retry and rate limiting.
//!
//! Every call sends a single user-role message and carries no conversation
//! history. Backends only move bytes; retry, pacing, caching and response
//! sanitation live in [`Gateway`] so that they behave the same for the HTTP
//! backend and the mock.

mod cache;
pub mod mock;
mod openai;
mod sanitize;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, ResponseCache};
pub use openai::OpenAiBackend;
pub use sanitize::sanitize_response;

use crate::prompts::{PromptKind, RenderedPrompt};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub retry_backoff_ms: u64,
    pub min_interval_ms: u64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Upper bound on concurrent in-flight segments.
    pub parallelism: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            max_tokens: 512,
            timeout_ms: 60_000,
            max_retries: 5,
            retry_backoff_ms: 1_000,
            min_interval_ms: 0,
            api_key_env: Some("OPENAI_API_KEY".into()),
            parallelism: 4,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn min_interval(&self) -> Duration {
        Duration::from_millis(self.min_interval_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// OpenAI-compatible request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn single_turn(config: &BackendConfig, text: &str) -> Self {
        ChatRequest {
            model: config.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: text.to_string(),
            }],
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFailure {
    /// Transport failures, 429 and 5xx: worth retrying.
    Retryable { status: Option<u16>, message: String },
    Fatal { status: Option<u16>, message: String },
    Protocol(String),
}

pub trait ChatBackend: Send + Sync {
    /// Sends one request and returns the first choice's message content.
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, BackendFailure>;
}

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Always reports the same instant; used for reproducible artifacts.
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

/// One request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub kind: PromptKind,
    pub prompt: String,
    pub cache_key: CacheKey,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub raw_response: String,
    pub sanitized_response: String,
    pub latency_ms: u64,
    pub from_cache: bool,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    /// Requests that reached the backend, retries included.
    pub backend_requests: u64,
    /// Logical calls answered by the backend (one per successful or failed call).
    pub network_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
}

#[derive(Default)]
struct Counters {
    backend_requests: AtomicU64,
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
    retries: AtomicU64,
}

/// Enforces a minimum spacing between request starts across all workers.
struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(interval: Duration) -> Self {
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + self.interval);
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

const MAX_BACKOFF: Duration = Duration::from_secs(60);

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    config: BackendConfig,
    cache: Option<ResponseCache>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    counters: Counters,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: BackendConfig) -> Result<Self> {
        config.validate()?;
        Ok(Gateway {
            backend,
            limiter: RateLimiter::new(config.min_interval()),
            config,
            cache: None,
            clock: Arc::new(SystemClock),
            counters: Counters::default(),
        })
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            backend_requests: self.counters.backend_requests.load(Ordering::SeqCst),
            network_calls: self.counters.network_calls.load(Ordering::SeqCst),
            cache_hits: self.counters.cache_hits.load(Ordering::SeqCst),
            retries: self.counters.retries.load(Ordering::SeqCst),
        }
    }

    /// Sends `prompt` as one user message, answering from the cache when
    /// possible. Blank completions are reported as [`Error::EmptyResponse`]
    /// and never cached.
    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<ChatExchange> {
        let key = CacheKey::new(&self.config, &prompt.text);
        let timestamp_ms = self.clock.now_ms();
        if let Some(raw) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(self.exchange(prompt, key, raw, 0, true, timestamp_ms));
        }

        let started = Instant::now();
        let request = ChatRequest::single_turn(&self.config, &prompt.text);
        self.counters.network_calls.fetch_add(1, Ordering::SeqCst);
        let raw = self.send_with_retry(&request)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if raw.trim().is_empty() {
            return Err(Error::EmptyResponse);
        }
        if let Some(cache) = &self.cache {
            cache.insert(&key, &self.config.model, &raw)?;
        }
        Ok(self.exchange(prompt, key, raw, latency_ms, false, timestamp_ms))
    }

    fn send_with_retry(&self, request: &ChatRequest) -> Result<String> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.limiter.acquire();
            self.counters.backend_requests.fetch_add(1, Ordering::SeqCst);
            match self.backend.send(request) {
                Ok(text) => return Ok(text),
                Err(BackendFailure::Retryable { status, message }) => {
                    if attempt > self.config.max_retries {
                        return Err(Error::Transport {
                            status,
                            attempts: attempt,
                            message,
                        });
                    }
                    self.counters.retries.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(self.backoff(attempt));
                }
                Err(BackendFailure::Fatal { status, message }) => {
                    return Err(Error::Transport {
                        status,
                        attempts: attempt,
                        message,
                    })
                }
                Err(BackendFailure::Protocol(message)) => return Err(Error::Protocol(message)),
            }
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.config.retry_backoff_ms.saturating_mul(factor)).min(MAX_BACKOFF)
    }

    fn exchange(
        &self,
        prompt: &RenderedPrompt,
        cache_key: CacheKey,
        raw: String,
        latency_ms: u64,
        from_cache: bool,
        timestamp_ms: u64,
    ) -> ChatExchange {
        ChatExchange {
            kind: prompt.kind,
            prompt: prompt.text.clone(),
            cache_key,
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            sanitized_response: sanitize_response(&raw),
            raw_response: raw,
            latency_ms,
            from_cache,
            timestamp_ms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{MockBackend, MockScript};
    use super::*;
    use crate::prompts::{render_prompt, PromptInputs};
    use std::collections::{BTreeMap, VecDeque};

    fn prompt(text: &str) -> RenderedPrompt {
        render_prompt(
            PromptKind::Translate,
            &PromptInputs {
                source: Some(text),
                lang: "French",
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn config() -> BackendConfig {
        BackendConfig {
            retry_backoff_ms: 1,
            api_key_env: None,
            ..BackendConfig::default()
        }
    }

    struct Scripted {
        replies: Mutex<VecDeque<std::result::Result<String, BackendFailure>>>,
        seen: Mutex<Vec<ChatRequest>>,
    }

    impl Scripted {
        fn new(replies: Vec<std::result::Result<String, BackendFailure>>) -> Arc<Self> {
            Arc::new(Scripted {
                replies: Mutex::new(replies.into()),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl ChatBackend for Scripted {
        fn send(&self, request: &ChatRequest) -> std::result::Result<String, BackendFailure> {
            self.seen.lock().unwrap().push(request.clone());
            self.replies.lock().unwrap().pop_front().expect("no scripted reply left")
        }
    }

    fn retryable(status: u16) -> std::result::Result<String, BackendFailure> {
        Err(BackendFailure::Retryable {
            status: Some(status),
            message: "busy".into(),
        })
    }

    #[test]
    fn mock_mapping() {
        let p = prompt("Hello");
        let map = BTreeMap::from([(p.text.clone(), "Bonjour".to_string())]);
        let backend = Arc::new(MockBackend::new(MockScript::fixed(map)));
        let gw = Gateway::new(backend.clone(), config()).unwrap();
        let ex = gw.complete(&p).unwrap();
        assert_eq!(ex.raw_response, "Bonjour");
        assert!(!ex.from_cache);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn single_user_message_without_history() {
        let backend = Scripted::new(vec![Ok("a".into()), Ok("b".into())]);
        let gw = Gateway::new(backend.clone(), config()).unwrap();
        gw.complete(&prompt("one")).unwrap();
        gw.complete(&prompt("two")).unwrap();
        let seen = backend.seen.lock().unwrap();
        for (req, src) in seen.iter().zip(["one", "two"]) {
            assert_eq!(req.messages.len(), 1);
            assert_eq!(req.messages[0].role, "user");
            assert!(req.messages[0].content.starts_with(&format!("Source: {src}\n")));
        }
    }

    #[test]
    fn cache_hit_makes_no_call() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(MockBackend::new(MockScript::identity()));
        let gw = Gateway::new(backend.clone(), config())
            .unwrap()
            .with_cache(ResponseCache::open(dir.path()).unwrap());
        let first = gw.complete(&prompt("Hallo")).unwrap();
        let second = gw.complete(&prompt("Hallo")).unwrap();
        assert!(!first.from_cache);
        assert!(second.from_cache);
        assert_eq!(first.raw_response, second.raw_response);
        assert_eq!(backend.calls(), 1);
        assert_eq!(gw.stats().cache_hits, 1);
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let backend = Scripted::new(vec![retryable(429), retryable(503), Ok("ok".into())]);
        let gw = Gateway::new(backend.clone(), config()).unwrap();
        let ex = gw.complete(&prompt("x")).unwrap();
        assert_eq!(ex.raw_response, "ok");
        let stats = gw.stats();
        assert_eq!(stats.retries, 2);
        assert_eq!(stats.backend_requests, 3);
        assert_eq!(stats.network_calls, 1);
    }

    #[test]
    fn retries_exhausted_carry_last_status() {
        let backend = Scripted::new(vec![retryable(500), retryable(502), retryable(429)]);
        let gw = Gateway::new(
            backend,
            BackendConfig {
                max_retries: 2,
                ..config()
            },
        )
        .unwrap();
        match gw.complete(&prompt("x")) {
            Err(Error::Transport { status, attempts, .. }) => {
                assert_eq!(status, Some(429));
                assert_eq!(attempts, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fatal_and_protocol_errors_are_not_retried() {
        let backend = Scripted::new(vec![Err(BackendFailure::Fatal {
            status: Some(401),
            message: "no".into(),
        })]);
        let gw = Gateway::new(backend.clone(), config()).unwrap();
        assert!(matches!(gw.complete(&prompt("x")), Err(Error::Transport { status: Some(401), .. })));

        let backend = Scripted::new(vec![Err(BackendFailure::Protocol("bad json".into()))]);
        let gw = Gateway::new(backend, config()).unwrap();
        assert!(matches!(gw.complete(&prompt("x")), Err(Error::Protocol(_))));
    }

    #[test]
    fn empty_completion_is_reported_and_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Scripted::new(vec![Ok("  \n".into()), Ok("fine".into())]);
        let gw = Gateway::new(backend, config())
            .unwrap()
            .with_cache(ResponseCache::open(dir.path()).unwrap());
        assert!(matches!(gw.complete(&prompt("x")), Err(Error::EmptyResponse)));
        assert_eq!(gw.complete(&prompt("x")).unwrap().raw_response, "fine");
    }

    #[test]
    fn sanitizes_responses() {
        let backend = Scripted::new(vec![Ok("Translation: \"Salut\"\n".into())]);
        let gw = Gateway::new(backend, config()).unwrap();
        let ex = gw.complete(&prompt("x")).unwrap();
        assert_eq!(ex.sanitized_response, "Salut");
        assert_eq!(ex.raw_response, "Translation: \"Salut\"\n");
    }

    #[test]
    fn min_interval_spaces_requests() {
        let backend = Arc::new(MockBackend::new(MockScript::identity()));
        let gw = Gateway::new(
            backend,
            BackendConfig {
                min_interval_ms: 20,
                ..config()
            },
        )
        .unwrap();
        let started = Instant::now();
        for i in 0..4 {
            gw.complete(&prompt(&format!("p{i}"))).unwrap();
        }
        assert!(started.elapsed() >= Duration::from_millis(60));
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig {
            temperature: -0.1,
            ..config()
        }
        .validate()
        .is_err());
        assert!(BackendConfig {
            timeout_ms: 0,
            ..config()
        }
        .validate()
        .is_err());
    }
}
