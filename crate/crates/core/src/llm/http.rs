use std::fmt;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{
    BackendConfig, ChatMessage, ClientError, CompletionRequest, FinishReason, RequestContext,
    Transport, TransportError, TransportReply,
};

/// Bearer token read from the environment. Never printed.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn from_env(var: &str) -> Result<Self, ClientError> {
        match std::env::var(var) {
            Ok(v) if !v.trim().is_empty() => Ok(Self(v.trim().to_string())),
            _ => Err(ClientError::MissingApiKey {
                var: var.to_string(),
            }),
        }
    }

    fn redact(&self, text: &str) -> String {
        text.replace(&self.0, "[REDACTED]")
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey([REDACTED])")
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

/// Chat-completion endpoint over HTTPS (or plain HTTP for local servers).
///
/// Request body: `{model, messages: [{role, content}], temperature, max_tokens}`.
/// The reply is read from `choices[0].message.content`.
pub struct HttpTransport {
    endpoint: String,
    key: ApiKey,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("endpoint", &self.endpoint)
            .field("key", &self.key)
            .finish()
    }
}

impl HttpTransport {
    /// Reads the key from `config.api_key_env_var`.
    pub fn from_config(config: &BackendConfig) -> Result<Self, ClientError> {
        let key = ApiKey::from_env(&config.api_key_env_var)?;
        Ok(Self::with_key(config, key))
    }

    pub fn with_key(config: &BackendConfig, key: ApiKey) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: config.endpoint_url.clone(),
            key,
            agent,
        }
    }
}

/// Extracts `choices[0].message.content` and `finish_reason`.
pub(crate) fn parse_reply(body: &str) -> Result<TransportReply, TransportError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| TransportError::Malformed(format!("invalid JSON: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| TransportError::Malformed("missing choices[0]".into()))?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))?;
    Ok(TransportReply {
        content: content.to_string(),
        finish_reason: FinishReason::from_wire(choice.get("finish_reason").and_then(Value::as_str)),
    })
}

impl Transport for HttpTransport {
    fn send(
        &self,
        request: &CompletionRequest,
        ctx: RequestContext,
    ) -> Result<TransportReply, TransportError> {
        let body = WireRequest {
            model: &request.model_name,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        log::debug!("POST {} attempt {}", self.endpoint, ctx.attempt);
        let result = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key.0))
            .send_json(&body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(TransportError::Timeout),
            Err(e) => return Err(TransportError::Network(self.key.redact(&e.to_string()))),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Err(TransportError::Timeout),
            Err(e) => return Err(TransportError::Network(self.key.redact(&e.to_string()))),
        };
        if !(200..300).contains(&status) {
            let mut message = self.key.redact(&text);
            message.truncate(
                message
                    .char_indices()
                    .nth(200)
                    .map_or(message.len(), |(i, _)| i),
            );
            return Err(TransportError::Status {
                code: status,
                message,
            });
        }
        parse_reply(&text)
    }
}
