//! Deterministic scripted backend for offline tests.

use super::{BackendError, CompletionBackend, CompletionRequest, RequestTag};
use crate::domain::fnv1a;
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One reply rule. All present fields must match; the first matching rule
/// wins. `contains` is searched in the full prompt text (system + user).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<RequestTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<u32>,
    pub reply: String,
}

impl ScriptedRule {
    fn matches(&self, request: &CompletionRequest, full_text: &str) -> bool {
        if let Some(tag) = self.tag {
            if tag != request.tag {
                return false;
            }
        }
        if let Some(turn) = self.turn {
            if request.turn != Some(turn) {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            if !full_text.contains(needle.as_str()) {
                return false;
            }
        }
        true
    }
}

/// Declarative behavior: ordered rules plus a default reply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    #[serde(default)]
    pub rules: Vec<ScriptedRule>,
    #[serde(default)]
    pub default_reply: String,
}

impl ScriptedBehavior {
    pub fn from_json_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Transport(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("behavior file {}: {e}", path.display())))
    }
}

/// Replies from a rule table; identical (behavior, request, seed) always
/// yields an identical reply, independent of thread scheduling.
///
/// Reply templates support three placeholders:
/// - `{turn}`: the request turn (empty when absent)
/// - `{pick:a|b|c}`: a deterministic choice keyed by seed and request content
/// - `{previous_response}`: echoes the text under extraction, making the
///   scripted backend a perfect extractor
pub struct ScriptedBackend {
    behavior: ScriptedBehavior,
    seed: u64,
}

impl ScriptedBackend {
    pub fn new(behavior: ScriptedBehavior, seed: u64) -> Self {
        Self { behavior, seed }
    }

    fn render_reply(&self, template: &str, request: &CompletionRequest) -> String {
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open..];
            let Some(close) = after.find('}') else {
                out.push_str(after);
                return out;
            };
            let token = &after[1..close];
            if token == "turn" {
                if let Some(turn) = request.turn {
                    out.push_str(&turn.to_string());
                }
            } else if token == "previous_response" {
                out.push_str(&extract_previous_response(request).unwrap_or_default());
            } else if let Some(options) = token.strip_prefix("pick:") {
                let options: Vec<&str> = options.split('|').collect();
                if options.is_empty() {
                    out.push_str(&after[..close + 1]);
                } else {
                    let mut key = self.seed.to_le_bytes().to_vec();
                    key.extend_from_slice(request.full_text().as_bytes());
                    let index = (fnv1a(&key) % options.len() as u64) as usize;
                    out.push_str(options[index]);
                }
            } else {
                out.push_str(&after[..close + 1]);
            }
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        out
    }
}

/// Pulls the text between the extraction template's fixed markers.
fn extract_previous_response(request: &CompletionRequest) -> Option<String> {
    let text = request.user_messages.last()?;
    let start_marker = "Your previous response: ";
    let start = text.find(start_marker)? + start_marker.len();
    let end = text[start..]
        .find("\nExtract the final solution")
        .map(|offset| start + offset)
        .unwrap_or(text.len());
    Some(text[start..end].to_string())
}

#[async_trait]
impl CompletionBackend for ScriptedBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let full_text = request.full_text();
        let template = self
            .behavior
            .rules
            .iter()
            .find(|rule| rule.matches(request, &full_text))
            .map(|rule| rule.reply.as_str())
            .unwrap_or(self.behavior.default_reply.as_str());
        Ok(self.render_reply(template, request))
    }
}
