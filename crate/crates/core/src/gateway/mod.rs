//! The single contract for external model calls: chat generation, reward
//! scoring and embedding. A [`Gateway`] wraps any [`Provider`] with retry,
//! an on-disk response cache, an in-flight limit and token accounting.

mod cache;
#[cfg(feature = "http")]
pub mod http;
pub mod mock;
pub mod prompts;
mod topics;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::ResponseCache;
pub use topics::parse_topics;

use crate::error::{Error, ProviderError, Result};
use crate::text::{full_hash, hash_u64, whitespace_len};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub n_samples: u32,
    pub max_tokens: u32,
    /// Distinguishes deliberate re-asks of an otherwise identical request.
    /// Part of the cache key; never sent to the provider.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub retry_salt: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl ChatRequest {
    pub fn user(content: impl Into<String>) -> Self {
        ChatRequest {
            system: None,
            messages: vec![Message::new(Role::User, content)],
            temperature: 1.0,
            n_samples: 1,
            max_tokens: 512,
            retry_salt: 0,
        }
    }

    pub fn with_samples(mut self, n_samples: u32) -> Self {
        self.n_samples = n_samples;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Contract("chat request has no messages".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Contract("n_samples must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Contract("max_tokens must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Contract(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Content of the final user message.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    /// Everything the provider sees, flattened; used for token accounting.
    pub fn prompt_text(&self) -> String {
        let mut out = self.system.clone().unwrap_or_default();
        for m in &self.messages {
            out.push('\n');
            out.push_str(&m.content);
        }
        out
    }
}

/// A transcript ending in the assistant turn to be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRequest {
    pub transcript: Vec<Message>,
}

impl RewardRequest {
    pub fn new(transcript: Vec<Message>) -> Result<Self> {
        let req = RewardRequest { transcript };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        match self.transcript.last() {
            Some(m) if m.role == Role::Assistant => Ok(()),
            _ => Err(Error::Contract(
                "reward transcript must end with an assistant turn".into(),
            )),
        }
    }

    pub fn response(&self) -> &str {
        self.transcript.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChatResponse {
    pub completions: Vec<String>,
    #[serde(default)]
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedInput {
    pub owner_id: String,
    pub text: String,
}

impl EmbedInput {
    pub fn new(owner_id: impl Into<String>, text: impl Into<String>) -> Self {
        EmbedInput {
            owner_id: owner_id.into(),
            text: text.into(),
        }
    }
}

/// A fixed-dimension embedding tied to a chunk or question id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub owner_id: String,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Backend that actually talks to a model.
pub trait Provider: Send + Sync {
    /// Identifies the provider and models; namespaces cache keys.
    fn cache_namespace(&self) -> String;
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
    fn score(&self, request: &RewardRequest) -> Result<f64, ProviderError>;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with jitter in `[0, base)` derived from `key`.
    pub fn delay(&self, attempt: u32, key: &str) -> Duration {
        if self.base_delay_ms == 0 {
            return Duration::ZERO;
        }
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms);
        let jitter = hash_u64(&[key, &attempt.to_string()]) % self.base_delay_ms;
        Duration::from_millis(exp + jitter)
    }
}

struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Slot<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Slot<'_> {
        let mut active = self.active.lock().expect("in-flight lock");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("in-flight lock");
        }
        *active += 1;
        Slot(self)
    }
}

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().expect("in-flight lock");
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// Running totals for one gateway session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageTotals {
    pub chat_calls: u64,
    pub score_calls: u64,
    pub embed_calls: u64,
    pub cache_hits: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub failures: u64,
}

#[derive(Default)]
struct UsageCounters {
    chat_calls: AtomicU64,
    score_calls: AtomicU64,
    embed_calls: AtomicU64,
    cache_hits: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
    failures: AtomicU64,
}

pub const DEFAULT_IN_FLIGHT: usize = 8;

pub struct Gateway {
    provider: Box<dyn Provider>,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
    in_flight: InFlight,
    usage: UsageCounters,
    embed_dim: OnceLock<usize>,
}

impl Gateway {
    pub fn new(provider: impl Provider + 'static) -> Self {
        Gateway {
            provider: Box::new(provider),
            retry: RetryPolicy::default(),
            cache: None,
            in_flight: InFlight::new(DEFAULT_IN_FLIGHT),
            usage: UsageCounters::default(),
            embed_dim: OnceLock::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_in_flight(mut self, limit: usize) -> Self {
        self.in_flight = InFlight::new(limit);
        self
    }

    pub fn in_flight_limit(&self) -> usize {
        self.in_flight.limit
    }

    pub fn usage(&self) -> UsageTotals {
        let u = &self.usage;
        UsageTotals {
            chat_calls: u.chat_calls.load(Ordering::Relaxed),
            score_calls: u.score_calls.load(Ordering::Relaxed),
            embed_calls: u.embed_calls.load(Ordering::Relaxed),
            cache_hits: u.cache_hits.load(Ordering::Relaxed),
            prompt_tokens: u.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: u.completion_tokens.load(Ordering::Relaxed),
            failures: u.failures.load(Ordering::Relaxed),
        }
    }

    fn key(&self, kind: &str, payload: &impl Serialize) -> Result<String> {
        let body = serde_json::to_string(payload)?;
        Ok(full_hash(&[kind, &self.provider.cache_namespace(), &body]))
    }

    fn with_retry_loop<T>(
        &self,
        key: &str,
        mut call: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<T> {
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            let outcome = {
                let _slot = self.in_flight.acquire();
                call()
            };
            attempt += 1;
            match outcome {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < max => {
                    log::warn!("provider call failed (attempt {attempt}/{max}): {e}");
                    std::thread::sleep(self.retry.delay(attempt - 1, key));
                }
                Err(e) => {
                    self.usage.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(Error::Provider {
                        attempts: attempt,
                        source: e,
                    });
                }
            }
        }
    }

    /// Returns exactly `request.n_samples` completions.
    pub fn chat(&self, request: &ChatRequest) -> Result<Vec<String>> {
        request.validate()?;
        let key = self.key("chat", request)?;
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get::<Vec<String>>(&key)) {
            if hit.len() == request.n_samples as usize {
                self.usage.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        let response = self.with_retry_loop(&key, || self.provider.chat(request))?;
        self.usage.chat_calls.fetch_add(1, Ordering::Relaxed);
        if response.completions.len() != request.n_samples as usize {
            self.usage.failures.fetch_add(1, Ordering::Relaxed);
            return Err(Error::Provider {
                attempts: 1,
                source: ProviderError::Decode(format!(
                    "expected {} completions, got {}",
                    request.n_samples,
                    response.completions.len()
                )),
            });
        }
        let usage = response.usage.unwrap_or_else(|| Usage {
            prompt_tokens: whitespace_len(&request.prompt_text()) as u64,
            completion_tokens: response
                .completions
                .iter()
                .map(|c| whitespace_len(c) as u64)
                .sum(),
        });
        self.usage
            .prompt_tokens
            .fetch_add(usage.prompt_tokens, Ordering::Relaxed);
        self.usage
            .completion_tokens
            .fetch_add(usage.completion_tokens, Ordering::Relaxed);
        log::debug!(
            "chat n={} prompt_tokens={} completion_tokens={}",
            request.n_samples,
            usage.prompt_tokens,
            usage.completion_tokens
        );
        if let Some(cache) = &self.cache {
            cache.put(&key, &response.completions)?;
        }
        Ok(response.completions)
    }

    pub fn score(&self, request: &RewardRequest) -> Result<f64> {
        request.validate()?;
        let key = self.key("score", request)?;
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get::<f64>(&key)) {
            self.usage.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let reward = self.with_retry_loop(&key, || self.provider.score(request))?;
        self.usage.score_calls.fetch_add(1, Ordering::Relaxed);
        if !reward.is_finite() {
            return Err(Error::Provider {
                attempts: 1,
                source: ProviderError::Decode(format!("non-finite reward {reward}")),
            });
        }
        let tokens: u64 = request
            .transcript
            .iter()
            .map(|m| whitespace_len(&m.content) as u64)
            .sum();
        self.usage.prompt_tokens.fetch_add(tokens, Ordering::Relaxed);
        log::debug!("score prompt_tokens={tokens} reward={reward}");
        if let Some(cache) = &self.cache {
            cache.put(&key, &reward)?;
        }
        Ok(reward)
    }

    /// One record per input; every vector in the session shares one dimension.
    pub fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<EmbeddingRecord>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<String> = inputs.iter().map(|i| i.text.clone()).collect();
        let key = self.key("embed", &texts)?;
        let vectors = match self.cache.as_ref().and_then(|c| c.get::<Vec<Vec<f64>>>(&key)) {
            Some(hit) if hit.len() == texts.len() => {
                self.usage.cache_hits.fetch_add(1, Ordering::Relaxed);
                hit
            }
            _ => {
                let v = self.with_retry_loop(&key, || self.provider.embed(&texts))?;
                self.usage.embed_calls.fetch_add(1, Ordering::Relaxed);
                let tokens: u64 = texts.iter().map(|t| whitespace_len(t) as u64).sum();
                self.usage.prompt_tokens.fetch_add(tokens, Ordering::Relaxed);
                log::debug!("embed n={} prompt_tokens={tokens}", texts.len());
                v
            }
        };
        let decode = |msg: String| Error::Provider {
            attempts: 1,
            source: ProviderError::Decode(msg),
        };
        if vectors.len() != inputs.len() {
            return Err(decode(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                vectors.len()
            )));
        }
        let dim = *self.embed_dim.get_or_init(|| vectors[0].len());
        for v in &vectors {
            if v.len() != dim || dim == 0 {
                return Err(decode(format!(
                    "embedding dimension {} differs from session dimension {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(decode("embedding contains non-finite values".into()));
            }
        }
        if let Some(cache) = &self.cache {
            cache.put(&key, &vectors)?;
        }
        Ok(inputs
            .iter()
            .zip(vectors)
            .map(|(i, vector)| EmbeddingRecord {
                owner_id: i.owner_id.clone(),
                vector,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;
    use std::sync::Arc;

    struct Flaky {
        failures_before_success: u32,
        calls: Arc<AtomicU32>,
        error: ProviderError,
    }

    impl Provider for Flaky {
        fn cache_namespace(&self) -> String {
            "flaky".into()
        }
        fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures_before_success {
                return Err(self.error.clone());
            }
            Ok(ChatResponse {
                completions: vec!["ok".into(); request.n_samples as usize],
                usage: None,
            })
        }
        fn score(&self, _: &RewardRequest) -> Result<f64, ProviderError> {
            Ok(1.5)
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            Ok(texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect())
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    fn flaky(n: u32, error: ProviderError) -> (Gateway, Arc<AtomicU32>) {
        let calls = Arc::new(AtomicU32::new(0));
        let gw = Gateway::new(Flaky {
            failures_before_success: n,
            calls: calls.clone(),
            error,
        })
        .with_retry(fast_retry());
        (gw, calls)
    }

    #[test]
    fn transient_failures_are_retried() {
        let (gw, calls) = flaky(2, ProviderError::Transport("reset".into()));
        let out = gw.chat(&ChatRequest::user("hi").with_samples(2)).unwrap();
        assert_eq!(out, vec!["ok", "ok"]);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_exhausted_gives_provider_error() {
        let (gw, calls) = flaky(5, ProviderError::Status { status: 503, body: String::new() });
        let err = gw.chat(&ChatRequest::user("hi")).unwrap_err();
        assert!(matches!(err, Error::Provider { attempts: 3, .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(gw.usage().failures, 1);
    }

    #[test]
    fn decode_errors_are_not_retried() {
        let (gw, calls) = flaky(5, ProviderError::Decode("bad".into()));
        assert!(gw.chat(&ChatRequest::user("hi")).is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn whitespace_token_accounting() {
        let (gw, _) = flaky(0, ProviderError::Transport(String::new()));
        gw.chat(&ChatRequest::user("one two three").with_samples(2)).unwrap();
        let u = gw.usage();
        assert_eq!(u.prompt_tokens, 3);
        assert_eq!(u.completion_tokens, 2);
        assert_eq!(u.chat_calls, 1);
    }

    #[test]
    fn request_contracts() {
        let (gw, _) = flaky(0, ProviderError::Transport(String::new()));
        assert!(gw.chat(&ChatRequest::user("x").with_samples(0)).is_err());
        let mut empty = ChatRequest::user("x");
        empty.messages.clear();
        assert!(gw.chat(&empty).is_err());
        assert!(RewardRequest::new(vec![Message::new(Role::User, "q")]).is_err());
    }

    #[test]
    fn embed_dimension_is_homogeneous() {
        let (gw, _) = flaky(0, ProviderError::Transport(String::new()));
        let recs = gw
            .embed(&[EmbedInput::new("a", "xx"), EmbedInput::new("b", "yyy")])
            .unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.dim() == 2));
        assert_eq!(recs[1].owner_id, "b");
    }

    #[test]
    fn backoff_grows_and_is_capped() {
        let p = RetryPolicy::default();
        let d0 = p.delay(0, "k").as_millis() as u64;
        let d2 = p.delay(2, "k").as_millis() as u64;
        assert!((500..1000).contains(&d0));
        assert!((2000..2500).contains(&d2));
        assert!(p.delay(30, "k").as_millis() as u64 <= p.max_delay_ms + p.base_delay_ms);
    }

    #[test]
    fn in_flight_limit_is_respected() {
        struct Slow {
            active: AtomicU32,
            peak: Arc<AtomicU32>,
        }
        impl Provider for Slow {
            fn cache_namespace(&self) -> String {
                "slow".into()
            }
            fn chat(&self, r: &ChatRequest) -> Result<ChatResponse, ProviderError> {
                let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.active.fetch_sub(1, Ordering::SeqCst);
                Ok(ChatResponse {
                    completions: vec![String::new(); r.n_samples as usize],
                    usage: None,
                })
            }
            fn score(&self, _: &RewardRequest) -> Result<f64, ProviderError> {
                Ok(0.0)
            }
            fn embed(&self, _: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
                Ok(vec![])
            }
        }
        let peak = Arc::new(AtomicU32::new(0));
        let gw = Gateway::new(Slow {
            active: AtomicU32::new(0),
            peak: peak.clone(),
        })
        .with_in_flight(2);
        std::thread::scope(|s| {
            for i in 0..8 {
                let gw = &gw;
                s.spawn(move || gw.chat(&ChatRequest::user(format!("{i}"))).unwrap());
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gw.usage().chat_calls, 8);
    }
}
