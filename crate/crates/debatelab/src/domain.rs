//! Shared domain types: tasks, samples, personas, messages, transcripts and
//! the debate configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical token a prediction must reduce to for unanswerable samples.
pub const UNKNOWN_TOKEN: &str = "[UNKNOWN]";

/// Shape of the expected answer for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    MultipleChoice,
    Boolean,
    ExtractiveOrUnknown,
    FreeText,
}

/// The task prompt presented to every agent on every turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstruction {
    pub text: String,
    pub answer_kind: AnswerKind,
}

impl TaskInstruction {
    pub fn new(text: impl Into<String>, answer_kind: AnswerKind) -> Self {
        let text = text.into();
        assert!(!text.is_empty(), "task instruction text must be non-empty");
        Self { text, answer_kind }
    }

    /// Default instruction wording per answer kind.
    pub fn default_for(answer_kind: AnswerKind) -> Self {
        let text = match answer_kind {
            AnswerKind::MultipleChoice => {
                "Answer the following question by selecting one of the provided choices. \
                 Include the letter corresponding to your answer in the solution."
            }
            AnswerKind::Boolean => {
                "Answer the following question with yes or no."
            }
            AnswerKind::ExtractiveOrUnknown => {
                "Answer the following question. If the question is not answerable with the \
                 provided information, write '[UNKNOWN]'."
            }
            AnswerKind::FreeText => "Answer the following question.",
        };
        Self::new(text, answer_kind)
    }
}

/// One evaluation sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSample {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    /// Empty for unanswerable samples; those are scored against [UNKNOWN_TOKEN].
    #[serde(default)]
    pub reference_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

impl InputSample {
    pub fn is_unanswerable(&self) -> bool {
        self.reference_answers.is_empty()
    }
}

/// An expert role assigned to an agent for the whole debate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub description: String,
}

impl Persona {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self { name: name.into(), description: description.into() }
    }

    /// Persona used for neutral agents (no description by design).
    pub fn neutral(k: usize) -> Self {
        Self::new(format!("Participant {k}"), "")
    }
}

/// Identity of one debate participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentId {
    /// Turn-order position, 0-based and gap-free.
    pub index: usize,
    pub persona: Persona,
    pub is_moderator: bool,
}

/// One attributed utterance in a debate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    /// 1-based turn the message belongs to.
    pub turn: u32,
    pub author: AgentId,
    pub text: String,
    /// Agree/disagree with the current solution; only present when the active
    /// response generator requests the marker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<bool>,
    /// Set once final-answer extraction has run for this message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_solution: Option<String>,
}

/// Ordered record of every message in a debate; the single source of truth.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Max message turn, or 1 when empty.
    pub fn current_turn(&self) -> u32 {
        self.max_turn().max(1)
    }

    /// Max message turn, or 0 when empty (useful for window arithmetic).
    pub fn max_turn(&self) -> u32 {
        self.messages.iter().map(|m| m.turn).max().unwrap_or(0)
    }

    /// Appends a message. Turns must never move backwards.
    pub fn push(&mut self, message: Message) -> usize {
        assert!(message.turn >= 1, "message turn must be >= 1");
        assert!(
            message.turn >= self.max_turn(),
            "transcript turns are monotone: got turn {} after turn {}",
            message.turn,
            self.max_turn()
        );
        self.messages.push(message);
        self.messages.len() - 1
    }

    pub fn set_extracted(&mut self, index: usize, solution: String) {
        self.messages[index].extracted_solution = Some(solution);
    }

    /// Index of the latest message authored by `agent_index`, if any.
    pub fn last_message_of(&self, agent_index: usize) -> Option<usize> {
        self.messages
            .iter()
            .rposition(|m| m.author.index == agent_index)
    }
}

/// How a debate ends and how the final answer is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionProtocol {
    Majority,
    Supermajority,
    Unanimity,
    SimpleVoting,
    RankedVoting,
    ApprovalVoting,
    CumulativeVoting,
    SolutionCounting,
}

impl DecisionProtocol {
    pub fn is_consensus(self) -> bool {
        matches!(self, Self::Majority | Self::Supermajority | Self::Unanimity)
    }

    pub fn is_voting(self) -> bool {
        matches!(
            self,
            Self::SimpleVoting | Self::RankedVoting | Self::ApprovalVoting | Self::CumulativeVoting
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Majority => "majority",
            Self::Supermajority => "supermajority",
            Self::Unanimity => "unanimity",
            Self::SimpleVoting => "simple_voting",
            Self::RankedVoting => "ranked_voting",
            Self::ApprovalVoting => "approval_voting",
            Self::CumulativeVoting => "cumulative_voting",
            Self::SolutionCounting => "solution_counting",
        }
    }
}

/// Visibility/turn-order topology of the debate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscussionParadigm {
    Memory,
    Relay,
    Report,
    Debate,
    CollectiveRefinement,
}

impl DiscussionParadigm {
    pub fn requires_moderator(self) -> bool {
        matches!(self, Self::Report | Self::Debate)
    }
}

/// Prompt policy shaping each agent's reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseGenerator {
    Freetext,
    Simple,
    Critical,
    Reasoning,
}

impl ResponseGenerator {
    /// Whether the prompt asks for an explicit [AGREE]/[DISAGREE] marker.
    pub fn requests_agreement(self) -> bool {
        matches!(self, Self::Freetext | Self::Simple)
    }
}

/// Every run parameter of a debate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebateConfig {
    pub num_agents: usize,
    pub num_neutral_agents: usize,
    pub max_turns: u32,
    /// Number of discussion turns before the first vote; the vote happens at
    /// the end of this turn and every later turn.
    pub voting_starts_after_turn: u32,
    pub visible_turns_in_memory: u32,
    pub decision_protocol: DecisionProtocol,
    pub discussion_paradigm: DiscussionParadigm,
    pub response_generator: ResponseGenerator,
    /// Inner panel rounds per outer turn of the debate paradigm.
    pub debate_rounds: u32,
    /// AAD: every agent drafts its turn-1 answer with an empty history.
    pub all_agents_draft_first: bool,
    pub cumulative_point_budget: u32,
    pub use_chain_of_thought: bool,
    pub concurrent_requests: usize,
    pub seed: u64,
    pub num_runs: usize,
    /// Sampling temperature for discussion completions. Extraction and vote
    /// completions always run at temperature 0.
    pub temperature: f64,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            num_agents: 3,
            num_neutral_agents: 0,
            max_turns: 10,
            voting_starts_after_turn: 3,
            visible_turns_in_memory: 2,
            decision_protocol: DecisionProtocol::SimpleVoting,
            discussion_paradigm: DiscussionParadigm::Memory,
            response_generator: ResponseGenerator::Simple,
            debate_rounds: 2,
            all_agents_draft_first: false,
            cumulative_point_budget: 10,
            use_chain_of_thought: true,
            concurrent_requests: 100,
            seed: 0,
            num_runs: 3,
            temperature: 1.0,
        }
    }
}

/// Configuration violation, naming the offending field.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid config: {field}: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self { field, reason: reason.into() }
    }
}

/// Checks every cross-field invariant and returns the config unchanged.
pub fn validate_config(config: DebateConfig) -> Result<DebateConfig, ConfigError> {
    if config.num_agents == 0 {
        return Err(ConfigError::new("num_agents", "must be at least 1"));
    }
    if config.num_neutral_agents > config.num_agents {
        return Err(ConfigError::new(
            "num_neutral_agents",
            format!(
                "cannot exceed num_agents ({} > {})",
                config.num_neutral_agents, config.num_agents
            ),
        ));
    }
    if config.max_turns == 0 {
        return Err(ConfigError::new("max_turns", "must be at least 1"));
    }
    if config.voting_starts_after_turn == 0 {
        return Err(ConfigError::new("voting_starts_after_turn", "must be at least 1"));
    }
    if config.voting_starts_after_turn >= config.max_turns {
        return Err(ConfigError::new(
            "voting_starts_after_turn",
            format!(
                "must be smaller than max_turns ({} >= {})",
                config.voting_starts_after_turn, config.max_turns
            ),
        ));
    }
    if config.visible_turns_in_memory == 0 {
        return Err(ConfigError::new("visible_turns_in_memory", "must be at least 1"));
    }
    if config.debate_rounds == 0 {
        return Err(ConfigError::new("debate_rounds", "must be at least 1"));
    }
    if config.cumulative_point_budget == 0 {
        return Err(ConfigError::new("cumulative_point_budget", "must be at least 1"));
    }
    if config.concurrent_requests == 0 {
        return Err(ConfigError::new("concurrent_requests", "must be at least 1"));
    }
    if config.num_runs == 0 {
        return Err(ConfigError::new("num_runs", "must be at least 1"));
    }
    if config.discussion_paradigm == DiscussionParadigm::CollectiveRefinement
        && !config.decision_protocol.is_voting()
    {
        return Err(ConfigError::new(
            "decision_protocol",
            format!(
                "CI requires a voting protocol, got {}",
                config.decision_protocol.name()
            ),
        ));
    }
    if config.discussion_paradigm.requires_moderator() && config.num_agents < 3 {
        return Err(ConfigError::new(
            "num_agents",
            format!(
                "{:?} paradigm needs a moderator plus at least 2 panelists (num_agents >= 3)",
                config.discussion_paradigm
            ),
        ));
    }
    Ok(config)
}

/// Normalizes an answer for counting, vote deduplication and scoring.
///
/// Lowercases, strips punctuation and collapses whitespace. For multiple
/// choice the text reduces to the bare choice letter when one is unambiguously
/// present. "[UNKNOWN]" in any case maps to the canonical unanswerable token.
pub fn canonical_answer(text: &str, answer_kind: AnswerKind) -> String {
    let trimmed = text.trim();
    if trimmed.eq_ignore_ascii_case(UNKNOWN_TOKEN) {
        return UNKNOWN_TOKEN.to_string();
    }
    if answer_kind == AnswerKind::MultipleChoice {
        if let Some(letter) = leading_choice_letter(trimmed) {
            return letter.to_string();
        }
    }
    let mut normalized = normalize_text(trimmed);
    if answer_kind == AnswerKind::Boolean {
        normalized = match normalized.as_str() {
            "true" => "yes".to_string(),
            "false" => "no".to_string(),
            _ => normalized,
        };
    }
    normalized
}

/// Lowercase, drop punctuation, collapse whitespace runs.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            pending_space = true;
        } else if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            for low in ch.to_lowercase() {
                out.push(low);
            }
        }
        // punctuation is dropped
    }
    out
}

/// "C) ..." / "(b." / "c" style prefixes reduce to the bare letter.
fn leading_choice_letter(text: &str) -> Option<char> {
    let stripped = text.strip_prefix('(').unwrap_or(text).trim_start();
    let mut chars = stripped.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    match chars.next() {
        None => Some(first.to_ascii_lowercase()),
        Some(next) if matches!(next, ')' | '.' | ':' | ',') => Some(first.to_ascii_lowercase()),
        _ => None,
    }
}

/// Stable 64-bit FNV-1a over arbitrary bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Deterministic stream key for one debate: (seed, sample id, run index).
pub fn derive_rng_key(seed: u64, sample_id: &str, run_index: usize) -> u64 {
    let mut bytes = Vec::with_capacity(sample_id.len() + 16);
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(sample_id.as_bytes());
    bytes.extend_from_slice(&(run_index as u64).to_le_bytes());
    fnv1a(&bytes)
}
