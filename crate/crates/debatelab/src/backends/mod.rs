//! Agent completion providers: a deterministic scripted backend for tests, an
//! HTTP client for chat-completion endpoints, and embedding providers for the
//! answer-diversity metric.

mod embed;
mod http;
mod scripted;

pub use embed::{cosine_similarity, CountVectorEmbedder, Embedder, EmbeddingVector, HttpEmbedder};
pub use http::{HttpBackend, API_KEY_ENV};
pub use scripted::{ScriptedBackend, ScriptedBehavior, ScriptedRule};

use crate::domain::{Persona, TaskInstruction};
use crate::responders::{build_persona_prompt, parse_persona_reply, PromptBundle, TemplateSet};
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use thiserror::Error;

/// What a completion is for; extraction and vote requests run at
/// temperature 0 so repeated runs stay comparable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestTag {
    Discussion,
    Extraction,
    Vote,
    Challenge,
    Persona,
}

impl RequestTag {
    fn deterministic(self) -> bool {
        matches!(self, Self::Extraction | Self::Vote)
    }

    fn max_output_tokens(self) -> u32 {
        match self {
            Self::Discussion => 1024,
            Self::Extraction => 256,
            Self::Vote => 128,
            Self::Challenge => 512,
            Self::Persona => 128,
        }
    }
}

/// One completion call: system prompt plus ordered user messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user_messages: Vec<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub tag: RequestTag,
    /// Debate turn the request belongs to, when one applies. Lets scripted
    /// behaviors match on the turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<u32>,
}

impl CompletionRequest {
    /// Builds a request from a prompt bundle, applying the temperature policy
    /// for the tag.
    pub fn from_bundle(
        tag: RequestTag,
        bundle: PromptBundle,
        turn: Option<u32>,
        discussion_temperature: f64,
    ) -> Self {
        let temperature = if tag.deterministic() { 0.0 } else { discussion_temperature };
        Self {
            system: bundle.system,
            user_messages: vec![bundle.user],
            temperature,
            max_output_tokens: tag.max_output_tokens(),
            tag,
            turn,
        }
    }

    /// Full prompt text, used by scripted matchers.
    pub fn full_text(&self) -> String {
        let mut text = self.system.clone();
        for message in &self.user_messages {
            text.push('\n');
            text.push_str(message);
        }
        text
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("prompt error: {0}")]
    Prompt(#[from] crate::responders::PromptError),
}

/// A provider of agent completions, shareable across concurrent debates.
#[async_trait]
pub trait CompletionBackend: Send + Sync {
    async fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

/// Wraps a backend and counts completions, e.g. per debate.
pub struct CountingBackend<'a> {
    inner: &'a dyn CompletionBackend,
    calls: AtomicU64,
}

impl<'a> CountingBackend<'a> {
    pub fn new(inner: &'a dyn CompletionBackend) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[async_trait]
impl CompletionBackend for CountingBackend<'_> {
    async fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request).await
    }
}

/// Wraps a backend and records every request/reply pair for instrumented
/// tests (visibility soundness, isolation invariants).
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<(CompletionRequest, String)>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn take_log(&self) -> Vec<(CompletionRequest, String)> {
        std::mem::take(&mut self.log.lock().unwrap())
    }
}

#[async_trait]
impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    async fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let reply = self.inner.complete(request).await?;
        self.log.lock().unwrap().push((request.clone(), reply.clone()));
        Ok(reply)
    }
}

/// Generates `n` distinct personas, listing prior names on every call. An
/// unparseable or duplicate reply is retried once; the fallback is a generic
/// "Expert k" persona so the debate can always start.
pub async fn generate_personas(
    task: &TaskInstruction,
    n: usize,
    backend: &dyn CompletionBackend,
    templates: &TemplateSet,
) -> Result<Vec<Persona>, BackendError> {
    let mut personas: Vec<Persona> = Vec::with_capacity(n);
    for k in 0..n {
        let mut accepted = None;
        for _attempt in 0..2 {
            let bundle = build_persona_prompt(templates, task, &personas)?;
            let request = CompletionRequest::from_bundle(RequestTag::Persona, bundle, None, 1.0);
            let reply = backend.complete(&request).await?;
            match parse_persona_reply(&reply) {
                Some(persona)
                    if !personas.iter().any(|p| p.name.eq_ignore_ascii_case(&persona.name)) =>
                {
                    accepted = Some(persona);
                    break;
                }
                // duplicate name: it is already on the exclusion list, so the
                // retry prompt names it; unparseable: plain retry
                Some(_) | None => {}
            }
        }
        let persona = accepted.unwrap_or_else(|| {
            Persona::new(format!("Expert {}", k + 1), task.text.clone())
        });
        personas.push(persona);
    }
    Ok(personas)
}
