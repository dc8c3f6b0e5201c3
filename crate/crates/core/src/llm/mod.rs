//! Boundary to chat-completion services.
//!
//! Every model call goes through [`Gateway::complete`], which applies the
//! rate limiter, retries transient transport failures with jittered
//! exponential backoff, and prices the token usage against the
//! [`CostModel`]. Transports are swappable: the live OpenAI-compatible HTTP
//! client, a fixture directory replaying recorded responses by request hash,
//! and a scripted transport for declarative offline scenarios.

mod cost;
mod fixture;
mod limiter;
mod live;
mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Usd;

pub use cost::{accrue_cost, CostModel, Price};
pub use fixture::{request_hash, Fixture, FixtureTransport, RecordingTransport};
pub use limiter::RateLimiter;
pub use live::HttpTransport;
pub use scripted::{ScriptStep, Scenario, ScriptedTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Who is calling, for transports that route on it. Not part of the wire
/// request or the request hash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallContext {
    /// `generator` or a detector kind name.
    pub agent: String,
    /// Usually the question id.
    pub scope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip)]
    pub context: CallContext,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| LlmError::InvalidRequest("no messages".into()))?;
        if first.role == Role::Assistant {
            return Err(LlmError::InvalidRequest(
                "first message must be a system or user message".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} must be nonnegative",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
}

/// A response together with how many transport attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub response: ChatResponse,
    pub attempts: u32,
    pub cost: Usd,
}

/// Failure reported by a single transport attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Worth retrying: HTTP 429, 5xx, timeouts, dropped connections.
    #[error("transient failure{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transient { status: Option<u16>, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: TransportError },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("no price configured for model `{0}`")]
    UnknownModel(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// Time source; swapped out in tests so backoff and rate limiting can be
/// checked without real sleeps.
pub trait Clock: Send + Sync {
    fn now(&self) -> Instant;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Instant {
        Instant::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Retries for transient failures: wait `base · 2^k` with full jitter
/// before retry `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the jittered wait before retry number `retry` (1-based).
    pub fn cap(&self, retry: u32) -> Duration {
        self.base * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

pub struct Gateway {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: RateLimiter,
    cost_model: CostModel,
    clock: Arc<dyn Clock>,
    jitter: Mutex<ChaCha8Rng>,
    spent_pico: AtomicU64,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, cost_model: CostModel) -> Self {
        Gateway {
            transport,
            retry: RetryPolicy::default(),
            limiter: RateLimiter::unlimited(),
            cost_model,
            clock: Arc::new(SystemClock),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            spent_pico: AtomicU64::new(0),
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = RateLimiter::per_minute(requests_per_minute);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_jitter_seed(self, seed: u64) -> Self {
        *self.jitter.lock().unwrap() = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost_model
    }

    /// Total cost of every completed call so far.
    pub fn spent(&self) -> Usd {
        Usd::from_pico(self.spent_pico.load(Ordering::SeqCst))
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        if !self.cost_model.contains(&request.model) {
            return Err(LlmError::UnknownModel(request.model.clone()));
        }
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.limiter.acquire(self.clock.as_ref());
            match self.transport.send(request) {
                Ok(response) => {
                    let cost = accrue_cost(&response.usage, &request.model, &self.cost_model)?;
                    self.spent_pico.fetch_add(cost.pico(), Ordering::SeqCst);
                    self.calls.fetch_add(1, Ordering::SeqCst);
                    log::debug!(
                        "{} call for {} completed, attempts={attempt}",
                        request.context.agent,
                        request.context.scope
                    );
                    return Ok(Completion {
                        response,
                        attempts: attempt,
                        cost,
                    });
                }
                Err(TransportError::Transient { status, message }) => {
                    let last = TransportError::Transient { status, message };
                    if attempt > self.retry.max_retries {
                        log::warn!("giving up after {attempt} attempts: {last}");
                        return Err(LlmError::Transport {
                            attempts: attempt,
                            last,
                        });
                    }
                    let cap = self.retry.cap(attempt);
                    let wait = {
                        let mut rng = self.jitter.lock().unwrap();
                        cap.mul_f64(rng.random::<f64>())
                    };
                    log::warn!("attempt {attempt} failed ({last}), retrying in {wait:?}");
                    self.clock.sleep(wait);
                }
                Err(TransportError::Auth(m)) => return Err(LlmError::Auth(m)),
                Err(TransportError::Malformed(m)) => return Err(LlmError::MalformedResponse(m)),
                Err(e @ TransportError::Fatal(_)) => {
                    return Err(LlmError::Transport {
                        attempts: attempt,
                        last: e,
                    })
                }
            }
        }
    }
}

/// A clock whose `sleep` only advances a counter. Used by tests and by
/// offline runs that must not wait.
#[derive(Debug)]
pub struct ManualClock {
    start: Instant,
    elapsed: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl Default for ManualClock {
    fn default() -> Self {
        ManualClock {
            start: Instant::now(),
            elapsed: Mutex::new(Duration::ZERO),
            sleeps: Mutex::new(Vec::new()),
        }
    }
}

impl ManualClock {
    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Instant {
        self.start + *self.elapsed.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        *self.elapsed.lock().unwrap() += d;
        self.sleeps.lock().unwrap().push(d);
    }
}
