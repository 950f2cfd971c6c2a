//! Provider abstraction: chat-completion clients over HTTP, a scripted
//! provider for offline runs, a content-addressed response cache, retries,
//! rate limits and token accounting.

mod cache;
mod http;
mod scripted;

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::Cache;
pub use http::HttpChatProvider;
pub use scripted::{load_script, ScriptedProvider, ScriptedReply};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingAuth(String),
    #[error("provider `{provider}` failed after {attempts} attempt(s): {message}")]
    Provider {
        provider: String,
        attempts: u32,
        message: String,
    },
    #[error("scripted provider `{0}` has no replies left")]
    ScriptExhausted(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// One prompt sent to a provider.
#[derive(Debug, Clone, Copy)]
pub struct Request<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub text: String,
    /// Provider-reported (input, output) token counts.
    pub usage: Option<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendError {
    pub message: String,
    pub retryable: bool,
    /// A scripted provider ran out of replies.
    pub exhausted: bool,
}

impl SendError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
            exhausted: false,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
            exhausted: false,
        }
    }

    pub fn exhausted() -> Self {
        Self {
            message: "no replies left".into(),
            retryable: false,
            exhausted: true,
        }
    }
}

pub trait Provider: Send + Sync {
    fn send(&self, request: &Request<'_>) -> Result<Reply, SendError>;

    /// Scripted providers report zero latency so that recorded runs stay
    /// byte-identical.
    fn measures_latency(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub provider_id: String,
    pub model: String,
    pub prompt: String,
    pub response: String,
    pub prompt_digest: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Token counts are whitespace estimates rather than provider-reported.
    pub estimated: bool,
    /// Seconds.
    pub latency: f64,
}

/// Hex SHA-256 over provider id, model and prompt.
pub fn prompt_digest(provider_id: &str, model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(provider_id.as_bytes());
    h.update([0]);
    h.update(model.as_bytes());
    h.update([0]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

/// Hex SHA-256 of arbitrary text.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKindName {
    HttpChat,
    Scripted,
}

fn default_temperature() -> f64 {
    0.0
}

fn default_attempts() -> u32 {
    3
}

fn default_retry_base_ms() -> u64 {
    500
}

/// One entry of the provider configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub id: String,
    pub kind: ProviderKindName,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub rpm_limit: Option<u32>,
    #[serde(default)]
    pub max_concurrency: Option<usize>,
    /// Header carrying the key; `Authorization` when absent.
    #[serde(default)]
    pub auth_header: Option<String>,
    /// Prefix placed before the key; `Bearer` for `Authorization`.
    #[serde(default)]
    pub auth_scheme: Option<String>,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    /// Scripted replies file, relative to the configuration file.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

impl ProviderConfig {
    pub fn scripted(id: &str) -> Self {
        Self {
            id: id.to_string(),
            kind: ProviderKindName::Scripted,
            model: "scripted".into(),
            endpoint: None,
            auth_env: None,
            temperature: 0.0,
            max_tokens: None,
            rpm_limit: None,
            max_concurrency: None,
            auth_header: None,
            auth_scheme: None,
            headers: BTreeMap::new(),
            script: None,
            max_attempts: default_attempts(),
            retry_base_ms: default_retry_base_ms(),
            timeout_secs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderKind {
    HttpChat,
    Scripted,
    Cached(Box<ProviderKind>),
}

/// Shared handle through which every prompt is sent.
pub struct ProviderHandle {
    config: ProviderConfig,
    kind: ProviderKind,
    provider: Arc<dyn Provider>,
    cache: Option<Cache>,
    window: Mutex<VecDeque<Instant>>,
    slots: (Mutex<usize>, Condvar),
    log: Mutex<Vec<Exchange>>,
}

impl std::fmt::Debug for ProviderHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderHandle")
            .field("id", &self.config.id)
            .field("kind", &self.kind)
            .finish()
    }
}

impl ProviderHandle {
    pub fn new(config: ProviderConfig, provider: Arc<dyn Provider>) -> Self {
        let kind = match config.kind {
            ProviderKindName::HttpChat => ProviderKind::HttpChat,
            ProviderKindName::Scripted => ProviderKind::Scripted,
        };
        Self {
            config,
            kind,
            provider,
            cache: None,
            window: Mutex::new(VecDeque::new()),
            slots: (Mutex::new(0), Condvar::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Builds the provider described by `config`. Script paths resolve
    /// against `base_dir`.
    pub fn from_config(config: ProviderConfig, base_dir: &Path) -> Result<Self, GatewayError> {
        let provider: Arc<dyn Provider> = match config.kind {
            ProviderKindName::HttpChat => Arc::new(HttpChatProvider::from_config(&config)?),
            ProviderKindName::Scripted => {
                let replies = match &config.script {
                    Some(p) => load_script(&base_dir.join(p))?,
                    None => Vec::new(),
                };
                Arc::new(ScriptedProvider::new(replies))
            }
        };
        Ok(Self::new(config, provider))
    }

    /// A scripted provider replaying `replies` in order.
    pub fn scripted<S: Into<String>>(id: &str, replies: impl IntoIterator<Item = S>) -> Self {
        Self::scripted_with(
            id,
            replies
                .into_iter()
                .map(|r| ScriptedReply::Text(r.into()))
                .collect(),
        )
    }

    pub fn scripted_with(id: &str, replies: Vec<ScriptedReply>) -> Self {
        let mut config = ProviderConfig::scripted(id);
        config.retry_base_ms = 1;
        Self::new(config, Arc::new(ScriptedProvider::new(replies)))
    }

    pub fn with_cache(mut self, cache: Cache) -> Self {
        self.kind = ProviderKind::Cached(Box::new(self.kind));
        self.cache = Some(cache);
        self
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    pub fn kind(&self) -> &ProviderKind {
        &self.kind
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Exchanges completed so far, in completion order.
    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("exchange log poisoned").clone()
    }

    pub fn take_exchanges(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.log.lock().expect("exchange log poisoned"))
    }

    pub fn complete(&self, prompt: &str) -> Result<Exchange, GatewayError> {
        let digest = prompt_digest(&self.config.id, &self.config.model, prompt);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&digest) {
                if hit.prompt == prompt {
                    tracing::debug!(provider = %self.config.id, %digest, "cache hit");
                    self.record(&hit);
                    return Ok(hit);
                }
                tracing::warn!(%digest, "cache entry prompt differs; ignoring it");
            }
        }

        let request = Request {
            model: &self.config.model,
            prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let _slot = self.acquire_slot();
            self.wait_for_rate();
            let started = Instant::now();
            match self.provider.send(&request) {
                Ok(reply) => {
                    let latency = if self.provider.measures_latency() {
                        started.elapsed().as_secs_f64()
                    } else {
                        0.0
                    };
                    let (input_tokens, output_tokens, estimated) = match reply.usage {
                        Some((i, o)) => (i, o, false),
                        None => (estimate_tokens(prompt), estimate_tokens(&reply.text), true),
                    };
                    let ex = Exchange {
                        provider_id: self.config.id.clone(),
                        model: self.config.model.clone(),
                        prompt: prompt.to_string(),
                        response: reply.text,
                        prompt_digest: digest,
                        input_tokens,
                        output_tokens,
                        estimated,
                        latency,
                    };
                    if let Some(cache) = &self.cache {
                        cache.put(&ex)?;
                    }
                    self.record(&ex);
                    return Ok(ex);
                }
                Err(e) => {
                    if e.exhausted {
                        return Err(GatewayError::ScriptExhausted(self.config.id.clone()));
                    }
                    tracing::warn!(provider = %self.config.id, attempt, error = %e.message, "provider call failed");
                    last = e.message;
                    if !e.retryable {
                        return Err(GatewayError::Provider {
                            provider: self.config.id.clone(),
                            attempts: attempt,
                            message: last,
                        });
                    }
                    if attempt < attempts {
                        let delay = self
                            .config
                            .retry_base_ms
                            .saturating_mul(1 << (attempt - 1).min(16));
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(GatewayError::Provider {
            provider: self.config.id.clone(),
            attempts,
            message: last,
        })
    }

    fn record(&self, ex: &Exchange) {
        self.log
            .lock()
            .expect("exchange log poisoned")
            .push(ex.clone());
    }

    fn acquire_slot(&self) -> SlotGuard<'_> {
        let limit = self.config.max_concurrency.unwrap_or(usize::MAX).max(1);
        let (lock, cv) = &self.slots;
        let mut used = lock.lock().expect("slot lock poisoned");
        while *used >= limit {
            used = cv.wait(used).expect("slot lock poisoned");
        }
        *used += 1;
        SlotGuard { slots: &self.slots }
    }

    fn wait_for_rate(&self) {
        let Some(rpm) = self.config.rpm_limit.filter(|r| *r > 0) else {
            return;
        };
        let minute = Duration::from_secs(60);
        loop {
            let mut window = self.window.lock().expect("rate window poisoned");
            let now = Instant::now();
            while window
                .front()
                .is_some_and(|t| now.duration_since(*t) >= minute)
            {
                window.pop_front();
            }
            if window.len() < rpm as usize {
                window.push_back(now);
                return;
            }
            let wait = minute - now.duration_since(*window.front().expect("window is full"));
            drop(window);
            std::thread::sleep(wait);
        }
    }
}

struct SlotGuard<'a> {
    slots: &'a (Mutex<usize>, Condvar),
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let (lock, cv) = self.slots;
        let mut used = lock.lock().expect("slot lock poisoned");
        *used -= 1;
        cv.notify_one();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProviderTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Seconds.
    pub wall_time: f64,
    /// Some token counts are estimates.
    pub estimated: bool,
}

/// Per-provider sums over `exchanges`.
pub fn accounting_report(exchanges: &[Exchange]) -> BTreeMap<String, ProviderTotals> {
    let mut out: BTreeMap<String, ProviderTotals> = BTreeMap::new();
    for ex in exchanges {
        let t = out.entry(ex.provider_id.clone()).or_default();
        t.calls += 1;
        t.input_tokens += ex.input_tokens;
        t.output_tokens += ex.output_tokens;
        t.wall_time += ex.latency;
        t.estimated |= ex.estimated;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flaky {
        failures: Mutex<u32>,
    }

    impl Provider for Flaky {
        fn send(&self, _: &Request<'_>) -> Result<Reply, SendError> {
            let mut f = self.failures.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                return Err(SendError::transient("503"));
            }
            Ok(Reply {
                text: "ok".into(),
                usage: Some((7, 1)),
            })
        }
    }

    fn flaky(failures: u32) -> ProviderHandle {
        let mut c = ProviderConfig::scripted("f");
        c.kind = ProviderKindName::HttpChat;
        c.retry_base_ms = 1;
        ProviderHandle::new(
            c,
            Arc::new(Flaky {
                failures: Mutex::new(failures),
            }),
        )
    }

    #[test]
    fn scripted_replays_in_order_then_fails_loudly() {
        let p = ProviderHandle::scripted("s", ["one", "two"]);
        assert_eq!(p.complete("a").unwrap().response, "one");
        assert_eq!(p.complete("a").unwrap().response, "two");
        assert_eq!(
            p.complete("a").unwrap_err(),
            GatewayError::ScriptExhausted("s".into())
        );
    }

    #[test]
    fn retries_transient_failures() {
        let ex = flaky(2).complete("hi").unwrap();
        assert_eq!(
            (ex.input_tokens, ex.output_tokens, ex.estimated),
            (7, 1, false)
        );
        assert!(matches!(
            flaky(3).complete("hi"),
            Err(GatewayError::Provider { attempts: 3, .. })
        ));
    }

    #[test]
    fn estimates_missing_usage() {
        let ex = ProviderHandle::scripted("s", ["a b c"])
            .complete("x y")
            .unwrap();
        assert_eq!(
            (ex.input_tokens, ex.output_tokens, ex.estimated),
            (2, 3, true)
        );
        assert_eq!(ex.latency, 0.0);
        assert_eq!(ex.prompt_digest, prompt_digest("s", "scripted", "x y"));
    }

    #[test]
    fn cache_serves_second_call_without_provider() {
        let dir = tempfile::tempdir().unwrap();
        let p = ProviderHandle::scripted("s", ["only"]).with_cache(Cache::new(dir.path()).unwrap());
        let a = p.complete("q").unwrap();
        let b = p.complete("q").unwrap();
        assert_eq!(a, b);
        assert!(matches!(p.kind(), ProviderKind::Cached(_)));
    }

    #[test]
    fn accounting_sums() {
        assert!(accounting_report(&[]).is_empty());
        let mk = |i, o| Exchange {
            provider_id: "p".into(),
            model: "m".into(),
            prompt: String::new(),
            response: String::new(),
            prompt_digest: String::new(),
            input_tokens: i,
            output_tokens: o,
            estimated: false,
            latency: 0.5,
        };
        let r = accounting_report(&[mk(100, 10), mk(200, 20)]);
        let t = &r["p"];
        assert_eq!(
            (t.calls, t.input_tokens, t.output_tokens, t.wall_time),
            (2, 300, 30, 1.0)
        );
    }

    #[test]
    fn concurrency_limit_is_respected() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        struct Slow {
            live: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Provider for Slow {
            fn send(&self, _: &Request<'_>) -> Result<Reply, SendError> {
                let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.live.fetch_sub(1, Ordering::SeqCst);
                Ok(Reply {
                    text: "x".into(),
                    usage: None,
                })
            }
        }
        let slow = Arc::new(Slow {
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let mut c = ProviderConfig::scripted("c");
        c.max_concurrency = Some(2);
        let p = ProviderHandle::new(c, slow.clone());
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| p.complete("q").unwrap());
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(p.exchanges().len(), 6);
    }
}
