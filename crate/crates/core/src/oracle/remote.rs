//! JSON-over-HTTP chat-completion backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, OracleBackend};
use super::prompts::PromptPair;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body: `{model, messages: [{role: "system", ..}, {role: "user", ..}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn new(model: &str, prompt: &PromptPair) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage { role: "system".into(), content: prompt.system_content.clone() },
                ChatMessage { role: "user".into(), content: prompt.user_content.clone() },
            ],
        }
    }
}

/// Pulls the reply text out of the common response shapes:
/// `choices[0].message.content`, `message.content`, or `content`.
pub fn extract_reply(body: &serde_json::Value) -> Option<String> {
    let from_choices = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"));
    let from_message = body.get("message").and_then(|m| m.get("content"));
    from_choices
        .or(from_message)
        .or_else(|| body.get("content"))
        .and_then(|v| v.as_str())
        .map(str::to_string)
}

pub struct RemoteBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: String, model: String, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        RemoteBackend { endpoint, model, api_key, agent }
    }
}

impl OracleBackend for RemoteBackend {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(ChatRequest::new(&self.model, prompt)) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {detail}");
                return Err(if code == 429 || code >= 500 {
                    BackendError::Transport(msg)
                } else {
                    BackendError::Rejected(msg)
                });
            }
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        let body: serde_json::Value = resp
            .into_json()
            .map_err(|e| BackendError::Transport(format!("unreadable response body: {e}")))?;
        extract_reply(&body).ok_or_else(|| BackendError::Rejected(format!("no reply content in response: {body}")))
    }

    fn name(&self) -> &str {
        "remote"
    }
}
