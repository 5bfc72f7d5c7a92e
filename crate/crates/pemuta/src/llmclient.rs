//! Chat-completion client with a serialized pacing gate and retries.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use pemuta_core::chat::{ChatMessage, Role};
use serde::{Deserialize, Serialize};

/// Gap enforced between dispatches unless configured otherwise.
pub const DEFAULT_MIN_INTERVAL: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_BACKOFF_BASE: Duration = Duration::from_secs(2);
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(ClientError::InvalidRequest(
                "request has no user message".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::InvalidRequest(format!(
                "temperature {} is not >= 0",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ClientError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// All message contents joined by newlines; what mock rules match against.
    pub fn joined_content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub token_usage: TokenUsage,
    pub latency_ms: u64,
    pub provider_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no mock rule matches request: {0}")]
    UnmatchedRequest(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider returned an empty completion")]
    EmptyResponse,
}

impl ClientError {
    pub fn name(&self) -> &'static str {
        match self {
            ClientError::Auth(_) => "AuthError",
            ClientError::RateLimited { .. } => "RateLimited",
            ClientError::Provider { .. } => "ProviderError",
            ClientError::Timeout => "Timeout",
            ClientError::Transport(_) => "TransportError",
            ClientError::UnmatchedRequest(_) => "UnmatchedRequest",
            ClientError::InvalidRequest(_) => "InvalidRequest",
            ClientError::EmptyResponse => "EmptyResponse",
        }
    }

    /// Timeouts, 429, 5xx and transport failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            ClientError::RateLimited { .. } | ClientError::Timeout | ClientError::Transport(_) => {
                true
            }
            ClientError::Provider { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// Anything that can answer a chat request once, without pacing or retries.
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacingPolicy {
    #[serde(with = "secs")]
    pub min_interval: Duration,
    pub max_retries: u32,
    #[serde(with = "secs")]
    pub backoff_base: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for PacingPolicy {
    fn default() -> Self {
        PacingPolicy {
            min_interval: DEFAULT_MIN_INTERVAL,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_base: DEFAULT_BACKOFF_BASE,
        }
    }
}

impl PacingPolicy {
    /// No waiting at all; for tests and offline providers.
    pub fn immediate() -> Self {
        PacingPolicy {
            min_interval: Duration::ZERO,
            max_retries: 0,
            backoff_base: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (0-based): `base * 2^retry`.
    pub fn backoff(&self, retry: u32) -> Duration {
        self.backoff_base
            .saturating_mul(1u32.checked_shl(retry.min(16)).unwrap_or(u32::MAX))
    }
}

/// A shareable client. Dispatches go through one gate, so at most one
/// request is in flight and consecutive dispatches are at least
/// `min_interval` apart.
pub struct Client {
    provider: Box<dyn Provider>,
    policy: PacingPolicy,
    gate: Mutex<Option<Instant>>,
    dispatches: Mutex<Vec<Instant>>,
}

impl Client {
    pub fn new(provider: Box<dyn Provider>, policy: PacingPolicy) -> Self {
        Client {
            provider,
            policy,
            gate: Mutex::new(None),
            dispatches: Mutex::new(Vec::new()),
        }
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn policy(&self) -> &PacingPolicy {
        &self.policy
    }

    /// Dispatch instants so far, retries included.
    pub fn dispatch_times(&self) -> Vec<Instant> {
        self.dispatches
            .lock()
            .expect("dispatch log poisoned")
            .clone()
    }

    fn dispatch(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut last = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let ready = prev + self.policy.min_interval;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        let started = Instant::now();
        *last = Some(started);
        self.dispatches
            .lock()
            .expect("dispatch log poisoned")
            .push(started);
        let mut response = self.provider.complete(request)?;
        response.latency_ms = u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX);
        Ok(response)
    }

    /// Sends a request, retrying transient failures with exponential backoff.
    pub fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        request.validate()?;
        let mut retry = 0;
        loop {
            match self.dispatch(request) {
                Ok(r) if r.content.trim().is_empty() => return Err(ClientError::EmptyResponse),
                Ok(r) => return Ok(r),
                Err(e) if e.is_transient() && retry < self.policy.max_retries => {
                    thread::sleep(self.policy.backoff(retry));
                    retry += 1;
                }
                Err(ClientError::RateLimited { .. }) => {
                    return Err(ClientError::RateLimited {
                        attempts: retry + 1,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}
