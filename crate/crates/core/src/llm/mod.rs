//! Chat-completion client with retry, full-jitter backoff, and a shared
//! per-minute rate limit.
//!
//! The client talks to a [`Transport`]: [`HttpTransport`] for a live
//! chat-completion endpoint, or [`MockBackend`] for scripted, deterministic runs.
//! Time is read through a [`Clock`] so tests can audit request timestamps on a
//! virtual timeline.

mod clock;
mod http;
mod mock;
mod rate_limit;

pub use clock::{Clock, ManualClock, SystemClock};
pub use http::{ApiKey, HttpTransport};
pub use mock::{
    messages_hash, MockBackend, MockScript, RecordedRequest, ScriptMode, ScriptedResponse,
};
pub use rate_limit::RateLimiter;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    pub fn new(
        model_name: impl Into<String>,
        messages: Vec<ChatMessage>,
        temperature: f64,
        max_output_tokens: u32,
    ) -> Result<Self, ClientError> {
        let req = Self {
            model_name: model_name.into(),
            messages,
            temperature,
            max_output_tokens,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |reason: &str| Err(ClientError::InvalidRequest(reason.to_string()));
        if self.messages.is_empty() {
            return bad("messages must not be empty");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must be within [0, 2]");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl FinishReason {
    pub fn from_wire(s: Option<&str>) -> Self {
        match s {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub latency_ms: f64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub api_key_env_var: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff_base_s: f64,
    pub max_requests_per_minute: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            timeout_s: 60.0,
            max_retries: 5,
            backoff_base_s: 1.0,
            max_requests_per_minute: 60,
        }
    }
}

impl BackendConfig {
    /// Names of fields that violate their constraints.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.endpoint_url.trim().is_empty() {
            out.push("backend.endpoint_url: must not be empty".to_string());
        }
        if self.api_key_env_var.trim().is_empty() {
            out.push("backend.api_key_env_var: must not be empty".to_string());
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.timeout_s) {
            out.push("backend.timeout_s: must be positive".to_string());
        }
        if self.max_retries == 0 {
            out.push("backend.max_retries: must be positive".to_string());
        }
        if !positive(self.backoff_base_s) {
            out.push("backend.backoff_base_s: must be positive".to_string());
        }
        if self.max_requests_per_minute == 0 {
            out.push("backend.max_requests_per_minute: must be positive".to_string());
        }
        out
    }
}

/// Per-attempt metadata handed to a transport.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestContext {
    /// 1-based attempt number.
    pub attempt: u32,
    /// Clock reading at which the rate limiter released this request.
    pub issued_at: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportReply {
    pub content: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP status {code}")]
    Status { code: u16, message: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("network failure: {0}")]
    Network(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("no scripted response for prompt hash {0}")]
    Unscripted(String),
}

/// Anything that can carry one completion attempt.
pub trait Transport: Send + Sync {
    fn send(
        &self,
        request: &CompletionRequest,
        ctx: RequestContext,
    ) -> Result<TransportReply, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("authentication rejected with HTTP {status}")]
    AuthFailure { status: u16 },
    #[error("gave up after {attempts} attempts; last status {last_status}")]
    RetriesExhausted { attempts: u32, last_status: u16 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request rejected with HTTP {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("network failure: {0}")]
    Network(String),
    #[error("API key variable `{var}` is not set")]
    MissingApiKey { var: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("no scripted response for prompt hash {0}")]
    Unscripted(String),
}

/// What the orchestrator needs from a teacher model.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ClientError>;
}

fn is_retryable_status(code: u16) -> bool {
    code == 429 || (500..=599).contains(&code)
}

/// Retrying, rate-limited client over a transport.
pub struct LlmClient {
    transport: Arc<dyn Transport>,
    config: BackendConfig,
    limiter: Arc<RateLimiter>,
    clock: Arc<dyn Clock>,
    rng: Mutex<StdRng>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(
        transport: Arc<dyn Transport>,
        config: BackendConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ClientError> {
        let problems = config.violations();
        if !problems.is_empty() {
            return Err(ClientError::InvalidConfig(problems.join("; ")));
        }
        let limiter = Arc::new(RateLimiter::new(
            config.max_requests_per_minute,
            Duration::from_secs(60),
            clock.clone(),
        ));
        Ok(Self {
            transport,
            config,
            limiter,
            clock,
            rng: Mutex::new(StdRng::from_entropy()),
        })
    }

    /// Fixes the jitter RNG seed.
    pub fn with_seed(self, seed: u64) -> Self {
        Self {
            rng: Mutex::new(StdRng::seed_from_u64(seed)),
            ..self
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn limiter(&self) -> &RateLimiter {
        &self.limiter
    }

    /// Full jitter: uniform in [0, base * 2^retry].
    fn backoff(&self, retry: u32) -> Duration {
        let cap = self.config.backoff_base_s * 2f64.powi(retry as i32);
        let secs = self.rng.lock().expect("rng poisoned").gen_range(0.0..=cap);
        Duration::from_secs_f64(secs)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        request.validate()?;
        let max_attempts = self.config.max_retries + 1;
        let started = self.clock.now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let issued_at = self.limiter.acquire();
            let failure = match self
                .transport
                .send(request, RequestContext { attempt, issued_at })
            {
                Ok(reply) => {
                    let latency = self.clock.now().saturating_sub(started);
                    return Ok(CompletionResponse {
                        content: reply.content,
                        finish_reason: reply.finish_reason,
                        latency_ms: latency.as_secs_f64() * 1000.0,
                        attempt_count: attempt,
                    });
                }
                Err(TransportError::Status { code, .. }) if code == 401 || code == 403 => {
                    return Err(ClientError::AuthFailure { status: code });
                }
                Err(TransportError::Status { code, message }) if !is_retryable_status(code) => {
                    return Err(ClientError::Rejected {
                        status: code,
                        message,
                    });
                }
                Err(TransportError::Malformed(m)) => return Err(ClientError::MalformedResponse(m)),
                Err(TransportError::Network(m)) => return Err(ClientError::Network(m)),
                Err(TransportError::ScriptExhausted) => return Err(ClientError::ScriptExhausted),
                Err(TransportError::Unscripted(h)) => return Err(ClientError::Unscripted(h)),
                Err(e @ (TransportError::Status { .. } | TransportError::Timeout)) => e,
            };

            if attempt >= max_attempts {
                log::warn!("giving up after {attempt} attempts: {failure}");
                return Err(match failure {
                    TransportError::Status { code, .. } => ClientError::RetriesExhausted {
                        attempts: attempt,
                        last_status: code,
                    },
                    _ => ClientError::Timeout { attempts: attempt },
                });
            }
            let delay = self.backoff(attempt - 1);
            log::debug!(
                "attempt {attempt}/{max_attempts} failed ({failure}); retrying in {:.3}s",
                delay.as_secs_f64()
            );
            self.clock.sleep(delay);
        }
    }
}

impl CompletionBackend for LlmClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        LlmClient::complete(self, request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(max_retries: u32) -> BackendConfig {
        BackendConfig {
            max_retries,
            max_requests_per_minute: 1000,
            ..BackendConfig::default()
        }
    }

    fn request() -> CompletionRequest {
        CompletionRequest::new("m", vec![ChatMessage::user("hi")], 0.0, 8).unwrap()
    }

    fn client(
        script: Vec<ScriptedResponse>,
        max_retries: u32,
    ) -> (LlmClient, Arc<MockBackend>, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::new());
        let mock = Arc::new(MockBackend::sequential(script, clock.clone()).unwrap());
        let c = LlmClient::new(mock.clone(), config(max_retries), clock.clone())
            .unwrap()
            .with_seed(7);
        (c, mock, clock)
    }

    #[test]
    fn scripted_yes_is_one_attempt() {
        let (c, mock, _) = client(vec![ScriptedResponse::Reply("Yes".into())], 2);
        let r = c.complete(&request()).unwrap();
        assert_eq!(r.content, "Yes");
        assert_eq!(r.attempt_count, 1);
        assert_eq!(r.finish_reason, FinishReason::Stop);
        assert_eq!(mock.requests().len(), 1);
    }

    #[test]
    fn two_429_then_success_takes_three_attempts() {
        let (c, mock, clock) = client(
            vec![
                ScriptedResponse::Status(429),
                ScriptedResponse::Status(429),
                ScriptedResponse::Reply("ok".into()),
            ],
            5,
        );
        let r = c.complete(&request()).unwrap();
        assert_eq!(r.attempt_count, 3);
        let attempts: Vec<u32> = mock.requests().iter().map(|r| r.attempt).collect();
        assert_eq!(attempts, vec![1, 2, 3]);
        // backoff is bounded by base * (2^0 + 2^1)
        assert!(clock.now() <= Duration::from_secs_f64(3.0));
    }

    #[test]
    fn always_500_exhausts_after_three_attempts() {
        let (c, mock, _) = client(vec![ScriptedResponse::Status(500); 5], 2);
        assert_eq!(
            c.complete(&request()),
            Err(ClientError::RetriesExhausted {
                attempts: 3,
                last_status: 500
            })
        );
        assert_eq!(mock.requests().len(), 3);
    }

    #[test]
    fn timeouts_are_retried_then_reported() {
        let (c, _, _) = client(vec![ScriptedResponse::Timeout; 3], 2);
        assert_eq!(
            c.complete(&request()),
            Err(ClientError::Timeout { attempts: 3 })
        );
        let (c, _, _) = client(
            vec![
                ScriptedResponse::Timeout,
                ScriptedResponse::Reply("x".into()),
            ],
            2,
        );
        assert_eq!(c.complete(&request()).unwrap().attempt_count, 2);
    }

    #[test]
    fn non_retryable_statuses_fail_immediately() {
        for (code, expect_auth) in [
            (401, true),
            (403, true),
            (400, false),
            (404, false),
            (422, false),
        ] {
            let (c, mock, _) = client(
                vec![
                    ScriptedResponse::Status(code),
                    ScriptedResponse::Reply("x".into()),
                ],
                3,
            );
            let err = c.complete(&request()).unwrap_err();
            if expect_auth {
                assert_eq!(err, ClientError::AuthFailure { status: code });
            } else {
                assert!(matches!(err, ClientError::Rejected { status, .. } if status == code));
            }
            assert_eq!(
                mock.requests().len(),
                1,
                "status {code} must not be retried"
            );
        }
    }

    #[test]
    fn malformed_reply_is_not_retried() {
        let (c, mock, _) = client(vec![ScriptedResponse::Malformed("no choices".into())], 3);
        assert_eq!(
            c.complete(&request()),
            Err(ClientError::MalformedResponse("no choices".into()))
        );
        assert_eq!(mock.requests().len(), 1);
    }

    #[test]
    fn backoff_stays_within_full_jitter_cap() {
        let (c, _, _) = client(vec![ScriptedResponse::Reply("x".into())], 3);
        for retry in 0..6 {
            let cap = Duration::from_secs_f64(2f64.powi(retry));
            for _ in 0..50 {
                assert!(c.backoff(retry as u32) <= cap);
            }
        }
    }

    #[test]
    fn request_validation() {
        assert!(CompletionRequest::new("m", vec![], 0.5, 1).is_err());
        assert!(CompletionRequest::new("m", vec![ChatMessage::user("x")], 2.5, 1).is_err());
        assert!(CompletionRequest::new("m", vec![ChatMessage::user("x")], -0.1, 1).is_err());
        assert!(CompletionRequest::new("m", vec![ChatMessage::user("x")], 2.0, 1).is_ok());
    }

    #[test]
    fn config_violations_name_fields() {
        let cfg = BackendConfig {
            timeout_s: 0.0,
            max_requests_per_minute: 0,
            ..BackendConfig::default()
        };
        let v = cfg.violations();
        assert_eq!(v.len(), 2);
        assert!(v[0].starts_with("backend.timeout_s"));
        assert!(v[1].starts_with("backend.max_requests_per_minute"));
    }
}
