//! Remote chat-completions backend.
//!
//! Speaks the ubiquitous `/chat/completions` wire schema, so any
//! OpenAI-compatible deployment (frontier LLM or a fine-tuned SLM served
//! behind the same contract) plugs in via a URL and an API key.

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, TokenUsage};

pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    model: Option<String>,
    agent: ureq::Agent,
    id: String,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>, model: Option<String>) -> Self {
        let url = url.into();
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(300)))
            .build()
            .new_agent();
        let id = format!("http:{url}");
        Self { url, api_key, model, agent, id }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    messages: Vec<WireMessage<'a>>,
    temperature: f32,
    max_tokens: u32,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = WireRequest {
            model: self.model.as_deref(),
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage { role: m.role.as_str(), content: &m.content })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_new_tokens,
        };

        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(&body)
            .map_err(|e| GatewayError::Transport { attempts: 1, detail: e.to_string() })?;

        let status = response.status();
        if !status.is_success() {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(GatewayError::Remote { status: status.as_u16(), body });
        }

        let parsed: WireResponse = response.body_mut().read_json().map_err(|e| {
            GatewayError::Transport { attempts: 1, detail: format!("bad response body: {e}") }
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Transport {
                attempts: 1,
                detail: "response had no choices".to_string(),
            })?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(ChatResponse {
            content,
            usage: TokenUsage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
            backend_id: parsed.model.unwrap_or_else(|| self.id.clone()),
        })
    }
}
