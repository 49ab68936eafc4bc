//! Chat-completion HTTP backend with bounded retries and a process-wide
//! in-flight cap.

use super::{BackendError, CompletionBackend, CompletionRequest};
use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::Semaphore;

const MAX_ATTEMPTS: u32 = 3;
const BASE_BACKOFF_MS: u64 = 200;

/// Environment variable read for the bearer credential. Secrets never live
/// in the config file.
pub const API_KEY_ENV: &str = "DEBATELAB_API_KEY";

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

/// Speaks `POST {base_url}/chat/completions` and reads the first choice's
/// message content. Transient transport errors and 5xx/429 responses are
/// retried with exponential backoff; credential rejections are not.
pub struct HttpBackend {
    client: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
    in_flight: Arc<Semaphore>,
}

impl HttpBackend {
    /// `concurrent_requests` caps in-flight requests across every debate
    /// sharing this backend. The credential comes from [`API_KEY_ENV`].
    pub fn new(base_url: &str, model: &str, concurrent_requests: usize) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|key| !key.is_empty()),
            in_flight: Arc::new(Semaphore::new(concurrent_requests.max(1))),
        }
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        let mut messages = vec![json!({ "role": "system", "content": request.system })];
        for user in &request.user_messages {
            messages.push(json!({ "role": "user", "content": user }));
        }
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    async fn attempt(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut builder = self.client.post(&url).json(&self.body(request));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(BackendError::Auth(format!("{status} from {url}")));
        }
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::Transport(format!("{status} from {url}")));
        }
        if !status.is_success() {
            return Err(BackendError::Protocol(format!("{status} from {url}")));
        }
        let parsed: ChatResponse = response
            .json()
            .await
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|choice| choice.message.content)
            .ok_or_else(|| BackendError::Protocol("response carries no choices".into()))
    }
}

#[async_trait]
impl CompletionBackend for HttpBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let _permit = self
            .in_flight
            .acquire()
            .await
            .map_err(|_| BackendError::Transport("in-flight semaphore closed".into()))?;
        let mut last_error = None;
        for attempt in 0..MAX_ATTEMPTS {
            match self.attempt(request).await {
                Ok(text) => return Ok(text),
                Err(err @ BackendError::Transport(_)) => {
                    last_error = Some(err);
                    if attempt + 1 < MAX_ATTEMPTS {
                        let backoff = BASE_BACKOFF_MS << attempt;
                        tokio::time::sleep(Duration::from_millis(backoff)).await;
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(last_error.expect("at least one attempt"))
    }
}
