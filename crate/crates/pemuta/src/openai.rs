//! OpenAI-compatible chat-completions provider over HTTP(S).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::llmclient::{ChatRequest, ChatResponse, ClientError, Provider, TokenUsage};

pub const ENV_API_BASE: &str = "PEMUTA_API_BASE";
pub const ENV_API_KEY: &str = "PEMUTA_API_KEY";
pub const ENV_MODEL: &str = "PEMUTA_MODEL";

pub struct OpenAiProvider {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Serialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        OpenAiProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    /// The JSON body sent for a request.
    pub fn wire_body(request: &ChatRequest) -> serde_json::Value {
        let messages: Vec<_> = request
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }
}

fn map_transport(e: ureq::Error) -> ClientError {
    match e {
        ureq::Error::Timeout(_) => ClientError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => ClientError::Timeout,
        other => ClientError::Transport(other.to_string()),
    }
}

impl Provider for OpenAiProvider {
    fn id(&self) -> &str {
        "openai-compatible"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut call = self
            .agent
            .post(&self.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(Self::wire_body(request))
            .map_err(map_transport)?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(map_transport)?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ClientError::Auth(format!("status {status}"))),
            429 => return Err(ClientError::RateLimited { attempts: 1 }),
            _ => return Err(ClientError::Provider { status, body }),
        }
        let wire: WireResponse =
            serde_json::from_str(&body).map_err(|e| ClientError::Provider {
                status,
                body: format!("unreadable completion: {e}"),
            })?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(ClientError::EmptyResponse)?;
        let usage = wire.usage.unwrap_or_default();
        Ok(ChatResponse {
            content,
            token_usage: TokenUsage {
                prompt: usage.prompt_tokens,
                completion: usage.completion_tokens,
            },
            latency_ms: 0,
            provider_id: self.id().to_string(),
        })
    }
}
