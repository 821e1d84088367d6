use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{BackendError, ChatBackend, ChatReply, ModelRole};

/// OpenAI-compatible chat-completions client.
pub struct HttpChatBackend {
    endpoint: String,
    model: String,
    api_key: String,
    max_in_flight: usize,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpChatBackend {
    pub fn new(endpoint: String, model: String, api_key: String, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        HttpChatBackend {
            endpoint,
            model,
            api_key,
            max_in_flight: max_in_flight.max(1),
            agent,
        }
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(
        &self,
        _role: ModelRole,
        system: &str,
        user: &str,
        temperature: f64,
    ) -> Result<ChatReply, BackendError> {
        let mut messages = Vec::new();
        if !system.is_empty() {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": user}));
        let body = json!({
            "model": self.model,
            "temperature": temperature,
            "messages": messages,
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError(e.to_string()))?;
        let c: Completion = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError(format!("bad completion body: {e}")))?;
        let text = c
            .choices
            .into_iter()
            .next()
            .and_then(|ch| ch.message.content)
            .ok_or_else(|| BackendError("completion has no content".into()))?;
        let (input_tokens, output_tokens) = c
            .usage
            .map(|u| (u.prompt_tokens, u.completion_tokens))
            .unwrap_or((0, 0));
        Ok(ChatReply {
            text,
            input_tokens,
            output_tokens,
        })
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}
