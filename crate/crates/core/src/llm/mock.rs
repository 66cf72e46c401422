use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    ChatMessage, Clock, CompletionRequest, FinishReason, RequestContext, Transport, TransportError,
    TransportReply,
};

/// One scripted outcome. In JSON: `{"reply": "Yes"}`, `{"status": 429}`,
/// `"timeout"`, or `{"malformed": "reason"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedResponse {
    Reply(String),
    Status(u16),
    Timeout,
    Malformed(String),
}

impl ScriptedResponse {
    fn play(&self) -> Result<TransportReply, TransportError> {
        match self {
            ScriptedResponse::Reply(content) => Ok(TransportReply {
                content: content.clone(),
                finish_reason: FinishReason::Stop,
            }),
            ScriptedResponse::Status(code) => Err(TransportError::Status {
                code: *code,
                message: "scripted".into(),
            }),
            ScriptedResponse::Timeout => Err(TransportError::Timeout),
            ScriptedResponse::Malformed(m) => Err(TransportError::Malformed(m.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptMode {
    Sequential,
    Keyed,
}

/// Script file contents.
///
/// Sequential: `{"mode": "sequential", "responses": [...]}`.
/// Keyed: `{"mode": "keyed", "keyed": {"<prompt hash>": {...}}}`, where the hash is
/// [`messages_hash`] of the request messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub mode: ScriptMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<ScriptedResponse>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub keyed: std::collections::BTreeMap<String, ScriptedResponse>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Hex SHA-256 of the JSON-serialized message list.
pub fn messages_hash(messages: &[ChatMessage]) -> String {
    let json = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub request: CompletionRequest,
    pub prompt_hash: String,
    pub attempt: u32,
    pub issued_at: Duration,
    pub received_at: Duration,
}

enum Script {
    Sequential(VecDeque<ScriptedResponse>),
    Keyed(HashMap<String, ScriptedResponse>),
}

/// Deterministic stand-in for a teacher endpoint. Safe to share across threads;
/// every request is appended to a log in arrival order.
pub struct MockBackend {
    script: Mutex<Script>,
    log: Mutex<Vec<RecordedRequest>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend").finish_non_exhaustive()
    }
}

impl MockBackend {
    /// Replays `responses` in order; errors once they run out.
    pub fn sequential(
        responses: Vec<ScriptedResponse>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, String> {
        if responses.is_empty() {
            return Err("mock script is empty".into());
        }
        Ok(Self::build(Script::Sequential(responses.into()), clock))
    }

    /// Answers by prompt hash; identical prompts always get identical answers.
    pub fn keyed(
        responses: impl IntoIterator<Item = (String, ScriptedResponse)>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, String> {
        let map: HashMap<_, _> = responses.into_iter().collect();
        if map.is_empty() {
            return Err("mock script is empty".into());
        }
        Ok(Self::build(Script::Keyed(map), clock))
    }

    pub fn from_script(script: MockScript, clock: Arc<dyn Clock>) -> Result<Self, String> {
        match script.mode {
            ScriptMode::Sequential => Self::sequential(script.responses, clock),
            ScriptMode::Keyed => Self::keyed(script.keyed, clock),
        }
    }

    fn build(script: Script, clock: Arc<dyn Clock>) -> Self {
        Self {
            script: Mutex::new(script),
            log: Mutex::new(Vec::new()),
            clock,
        }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl Transport for MockBackend {
    fn send(
        &self,
        request: &CompletionRequest,
        ctx: RequestContext,
    ) -> Result<TransportReply, TransportError> {
        let prompt_hash = messages_hash(&request.messages);
        let outcome = {
            let mut script = self.script.lock().expect("mock script poisoned");
            match &mut *script {
                Script::Sequential(queue) => {
                    queue.pop_front().ok_or(TransportError::ScriptExhausted)
                }
                Script::Keyed(map) => map
                    .get(&prompt_hash)
                    .cloned()
                    .ok_or_else(|| TransportError::Unscripted(prompt_hash.clone())),
            }
        };
        self.log
            .lock()
            .expect("mock log poisoned")
            .push(RecordedRequest {
                request: request.clone(),
                prompt_hash,
                attempt: ctx.attempt,
                issued_at: ctx.issued_at,
                received_at: self.clock.now(),
            });
        outcome?.play()
    }
}
