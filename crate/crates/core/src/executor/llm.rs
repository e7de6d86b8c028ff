//! OpenAI-compatible chat backend and the planner built on it.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Duration;

use crate::error::BackendError;
use crate::planner::{approx_tokens, Completion, Planner, PlannerRequest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;
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

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Blocking HTTP client for `{base_url}/chat/completions`. Transport errors
/// and 5xx responses are retried with exponential backoff.
pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    pub max_retries: u32,
    pub retry_base: Duration,
}

pub const ENV_BASE_URL: &str = "PF_BASE_URL";
pub const ENV_API_KEY: &str = "PF_API_KEY";
pub const ENV_MODEL: &str = "PF_MODEL";

impl HttpChatBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpChatBackend {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            max_retries: 3,
            retry_base: Duration::from_secs(1),
        })
    }

    /// Reads the endpoint from `PF_BASE_URL` and the key from `PF_API_KEY`.
    pub fn from_env() -> Result<Self, BackendError> {
        let base = std::env::var(ENV_BASE_URL)
            .map_err(|_| BackendError::Config(format!("{ENV_BASE_URL} is not set")))?;
        Self::new(base, std::env::var(ENV_API_KEY).ok())
    }

    pub fn with_retry_base(mut self, base: Duration) -> Self {
        self.retry_base = base;
        self
    }

    fn attempt(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut builder = self.client.post(format!("{}/chat/completions", self.base_url)).json(req);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status { status: status.as_u16(), body });
        }
        let wire: WireResponse =
            serde_json::from_str(&body).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("response has no message content".into()))?;
        let (tokens_in, tokens_out) = match wire.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                req.messages.iter().map(|m| approx_tokens(&m.content)).sum(),
                approx_tokens(&content),
            ),
        };
        Ok(ChatResponse { content, tokens_in, tokens_out })
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Transport(_) => true,
        BackendError::Status { status, .. } => *status >= 500,
        _ => false,
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut delay = self.retry_base;
        let mut tries = 0;
        loop {
            match self.attempt(req) {
                Err(e) if retryable(&e) && tries < self.max_retries => {
                    std::thread::sleep(delay);
                    delay *= 2;
                    tries += 1;
                }
                other => return other,
            }
        }
    }
}

/// A planner that forwards each request to a chat model.
pub struct ChatPlanner {
    pub backend: Arc<dyn ChatBackend>,
    pub model: String,
    pub max_tokens: u32,
}

impl ChatPlanner {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        ChatPlanner { backend, model: model.into(), max_tokens: 2048 }
    }
}

impl Planner for ChatPlanner {
    fn complete(&self, req: &PlannerRequest) -> Result<Completion, BackendError> {
        let resp = self.backend.chat(&ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::system(req.system.clone()), ChatMessage::user(req.context.clone())],
            temperature: req.temperature,
            max_tokens: self.max_tokens,
        })?;
        Ok(Completion { text: resp.content, tokens_in: resp.tokens_in, tokens_out: resp.tokens_out })
    }
}
