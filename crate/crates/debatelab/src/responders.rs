//! Prompt construction for every interaction and extraction of structured
//! signals (agreement markers, personas) from raw agent text.

use crate::domain::{AgentId, InputSample, Message, Persona, ResponseGenerator, TaskInstruction};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// System + user prompt pair for one completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
}

/// Information level of a post-debate challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengeKind {
    SolutionOnly,
    WithHistory,
    WithExtraContext,
    IrrelevantSolution,
    WrongSolution,
}

impl ChallengeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SolutionOnly => "solution_only",
            Self::WithHistory => "with_history",
            Self::WithExtraContext => "with_extra_context",
            Self::IrrelevantSolution => "irrelevant_solution",
            Self::WrongSolution => "wrong_solution",
        }
    }
}

/// One challenge-ablation scenario. Scenarios 4 and 5 present an injected
/// solution as the final answer; scenario 3 appends extra context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeScenario {
    pub kind: ChallengeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_solution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_context: Option<String>,
}

impl ChallengeScenario {
    pub fn new(kind: ChallengeKind) -> Self {
        Self { kind, injected_solution: None, extra_context: None }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("previous response must be non-empty")]
    EmptyPreviousResponse,
    #[error("scenario {0} requires an injected solution")]
    MissingInjectedSolution(&'static str),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("failed to read template {name:?}: {source}")]
    TemplateIo {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

const TEMPLATE_NAMES: [&str; 14] = [
    "system",
    "extraction",
    "vote_simple",
    "vote_approval",
    "vote_cumulative",
    "vote_ranked",
    "challenge_system",
    "challenge",
    "challenge_revision",
    "discussion_freetext",
    "discussion_simple",
    "discussion_critical",
    "discussion_reasoning",
    "persona",
];

fn builtin_template(name: &str) -> Option<&'static str> {
    Some(match name {
        "system" => include_str!("../templates/system.txt"),
        "extraction" => include_str!("../templates/extraction.txt"),
        "vote_simple" => include_str!("../templates/vote_simple.txt"),
        "vote_approval" => include_str!("../templates/vote_approval.txt"),
        "vote_cumulative" => include_str!("../templates/vote_cumulative.txt"),
        "vote_ranked" => include_str!("../templates/vote_ranked.txt"),
        "challenge_system" => include_str!("../templates/challenge_system.txt"),
        "challenge" => include_str!("../templates/challenge.txt"),
        "challenge_revision" => include_str!("../templates/challenge_revision.txt"),
        "discussion_freetext" => include_str!("../templates/discussion_freetext.txt"),
        "discussion_simple" => include_str!("../templates/discussion_simple.txt"),
        "discussion_critical" => include_str!("../templates/discussion_critical.txt"),
        "discussion_reasoning" => include_str!("../templates/discussion_reasoning.txt"),
        "persona" => include_str!("../templates/persona.txt"),
        "persona_system" => include_str!("../templates/persona_system.txt"),
        _ => return None,
    })
}

/// Prompt templates with `{placeholder}` substitution. Built-in texts can be
/// overridden per file from a templates directory.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    overrides: BTreeMap<String, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::default()
    }

    /// Loads `<name>.txt` overrides from a directory; files not present fall
    /// back to the built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut overrides = BTreeMap::new();
        for name in TEMPLATE_NAMES.iter().chain(["persona_system"].iter()) {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| PromptError::TemplateIo { name: name.to_string(), source })?;
                overrides.insert(name.to_string(), text);
            }
        }
        Ok(Self { overrides })
    }

    fn text(&self, name: &str) -> Result<&str, PromptError> {
        if let Some(text) = self.overrides.get(name) {
            return Ok(text.as_str());
        }
        builtin_template(name).ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
    }

    /// Renders a template in a single pass; substituted values are never
    /// re-scanned for placeholders.
    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let template = self.text(name)?;
        Ok(substitute(template.trim_end_matches('\n'), values))
    }
}

fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        if let Some(close) = after.find('}') {
            let key = &after[1..close];
            if let Some((_, value)) = values.iter().find(|(k, _)| *k == key) {
                out.push_str(value);
                rest = &after[close + 1..];
                continue;
            }
        }
        // unmatched brace or unknown key: keep the literal character
        out.push('{');
        rest = &after[1..];
    }
    out.push_str(rest);
    out
}

fn system_prompt(templates: &TemplateSet, persona: &Persona) -> Result<String, PromptError> {
    templates.render(
        "system",
        &[("persona", &persona.name), ("persona_description", &persona.description)],
    )
}

/// Render the input sample for Task/Input/Question template slots.
fn input_line(sample: &InputSample) -> String {
    sample.question.clone()
}

/// Labeled history lines: `<persona> (turn k): <text>`.
fn render_history(visible: &[&Message], redact_solutions: bool) -> String {
    let solutions: Vec<&str> = if redact_solutions {
        visible
            .iter()
            .filter_map(|m| m.extracted_solution.as_deref())
            .filter(|s| !s.is_empty())
            .collect()
    } else {
        Vec::new()
    };
    visible
        .iter()
        .map(|message| {
            let mut text = message.text.clone();
            for solution in &solutions {
                text = redact(&text, solution);
            }
            format!("{} (turn {}): {}", message.author.persona.name, message.turn, text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Removes occurrences of `solution` from `text`. Solutions shorter than
/// three characters (e.g. a bare choice letter) are removed only as
/// standalone words so surrounding prose survives.
fn redact(text: &str, solution: &str) -> String {
    if solution.len() >= 3 {
        return text.replace(solution, "[...]");
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find(solution) {
        let before_ok = rest[..pos].chars().next_back().map_or(true, |c| !c.is_alphanumeric());
        let after = &rest[pos + solution.len()..];
        let after_ok = after.chars().next().map_or(true, |c| !c.is_alphanumeric());
        out.push_str(&rest[..pos]);
        if before_ok && after_ok {
            out.push_str("[...]");
        } else {
            out.push_str(&rest[pos..pos + solution.len()]);
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Builds one discussion prompt. `visible` must already obey the paradigm's
/// visibility rule and the memory window.
pub fn build_discussion_prompt(
    templates: &TemplateSet,
    kind: ResponseGenerator,
    agent: &AgentId,
    task: &TaskInstruction,
    sample: &InputSample,
    visible: &[&Message],
    _turn: u32,
    use_chain_of_thought: bool,
) -> Result<PromptBundle, PromptError> {
    let template_name = match kind {
        ResponseGenerator::Freetext => "discussion_freetext",
        ResponseGenerator::Simple => "discussion_simple",
        ResponseGenerator::Critical => "discussion_critical",
        ResponseGenerator::Reasoning => "discussion_reasoning",
    };
    let context_block = sample
        .context
        .as_deref()
        .map(|context| format!("Context: {context}\n"))
        .unwrap_or_default();
    let history_block = if visible.is_empty() {
        String::new()
    } else {
        let redact_solutions = kind == ResponseGenerator::Reasoning;
        format!("Current discussion:\n{}\n", render_history(visible, redact_solutions))
    };
    let cot = if use_chain_of_thought { "\nLet's think step by step." } else { "" };
    let user = templates.render(
        template_name,
        &[
            ("task", &task.text),
            ("question", &sample.question),
            ("context_block", &context_block),
            ("history_block", &history_block),
            ("cot", cot),
        ],
    )?;
    Ok(PromptBundle { system: system_prompt(templates, &agent.persona)?, user })
}

/// Scans a reply for the agreement signal. Bracketed markers win anywhere in
/// the text; a bare AGREE/DISAGREE word counts only when it starts within the
/// first 40 characters (the challenge prompt demands the bare word).
pub fn extract_agreement(text: &str) -> Option<bool> {
    let lower = text.to_lowercase();
    let agree = lower.find("[agree]");
    let disagree = lower.find("[disagree]");
    match (agree, disagree) {
        (Some(a), Some(d)) => return Some(a < d),
        (Some(_), None) => return Some(true),
        (None, Some(_)) => return Some(false),
        (None, None) => {}
    }
    // bare-word fallback within the leading window
    let mut start = None;
    for (i, ch) in lower.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            if s > 40 {
                return None;
            }
            match &lower[s..i] {
                "agree" => return Some(true),
                "disagree" => return Some(false),
                _ => {}
            }
        }
    }
    if let Some(s) = start {
        if s <= 40 {
            match &lower[s..] {
                "agree" => return Some(true),
                "disagree" => return Some(false),
                _ => {}
            }
        }
    }
    None
}

/// Final-answer extraction prompt (verbatim template).
pub fn build_extraction_prompt(
    templates: &TemplateSet,
    agent: &AgentId,
    task: &TaskInstruction,
    sample: &InputSample,
    previous_response: &str,
) -> Result<PromptBundle, PromptError> {
    if previous_response.is_empty() {
        return Err(PromptError::EmptyPreviousResponse);
    }
    let user = templates.render(
        "extraction",
        &[
            ("task", &task.text),
            ("input", &input_line(sample)),
            ("previous_response", previous_response),
        ],
    )?;
    Ok(PromptBundle { system: system_prompt(templates, &agent.persona)?, user })
}

/// Numbered `Solution k:` lines in proposer turn order.
fn render_solutions(answers: &[String]) -> String {
    answers
        .iter()
        .enumerate()
        .map(|(i, answer)| format!("Solution {}: {}", i + 1, answer))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Voting prompt for one protocol; the tail instruction follows the
/// protocol's prompt figure verbatim.
pub fn build_voting_prompt(
    templates: &TemplateSet,
    protocol: crate::domain::DecisionProtocol,
    agent: &AgentId,
    task: &TaskInstruction,
    sample: &InputSample,
    candidate_answers: &[String],
    budget: u32,
) -> Result<PromptBundle, PromptError> {
    use crate::domain::DecisionProtocol as P;
    let template_name = match protocol {
        P::SimpleVoting => "vote_simple",
        P::ApprovalVoting => "vote_approval",
        P::CumulativeVoting => "vote_cumulative",
        P::RankedVoting => "vote_ranked",
        other => panic!("no voting prompt for {other:?}"),
    };
    let solutions = render_solutions(candidate_answers);
    let budget_text = budget.to_string();
    let user = templates.render(
        template_name,
        &[
            ("task", &task.text),
            ("input", &input_line(sample)),
            ("solutions", &solutions),
            ("budget", &budget_text),
        ],
    )?;
    Ok(PromptBundle { system: system_prompt(templates, &agent.persona)?, user })
}

/// Builds the (challenge, revision) prompt pair for one scenario.
pub fn build_challenge_prompts(
    templates: &TemplateSet,
    scenario: &ChallengeScenario,
    agent: &AgentId,
    task: &TaskInstruction,
    sample: &InputSample,
    final_answer: &str,
    transcript: &crate::domain::Transcript,
) -> Result<(PromptBundle, PromptBundle), PromptError> {
    let presented_answer = match scenario.kind {
        ChallengeKind::IrrelevantSolution | ChallengeKind::WrongSolution => scenario
            .injected_solution
            .as_deref()
            .ok_or(PromptError::MissingInjectedSolution(scenario.kind.name()))?,
        _ => final_answer,
    };
    let scenario_block = match scenario.kind {
        ChallengeKind::WithHistory => {
            let all: Vec<&Message> = transcript.messages().iter().collect();
            format!("This is the discussion history:\n{}\n", render_history(&all, false))
        }
        ChallengeKind::WithExtraContext => scenario
            .extra_context
            .as_deref()
            .map(|extra| format!("Additional context:\n{extra}\n"))
            .unwrap_or_default(),
        _ => String::new(),
    };
    let system = templates.render(
        "challenge_system",
        &[("persona", &agent.persona.name), ("persona_description", &agent.persona.description)],
    )?;
    let challenge_user = templates.render(
        "challenge",
        &[
            ("task", &task.text),
            ("question", &sample.question),
            ("final_answer", presented_answer),
            ("scenario_block", &scenario_block),
        ],
    )?;
    let revision_user = templates.render(
        "challenge_revision",
        &[
            ("task", &task.text),
            ("question", &sample.question),
            ("final_answer", presented_answer),
        ],
    )?;
    Ok((
        PromptBundle { system: system.clone(), user: challenge_user },
        PromptBundle { system, user: revision_user },
    ))
}

/// Asks for one expert persona, listing already generated names to forbid
/// duplicates.
pub fn build_persona_prompt(
    templates: &TemplateSet,
    task: &TaskInstruction,
    already_generated: &[Persona],
) -> Result<PromptBundle, PromptError> {
    let exclusions_block = if already_generated.is_empty() {
        String::new()
    } else {
        let names: Vec<&str> = already_generated.iter().map(|p| p.name.as_str()).collect();
        format!("These personas already exist and must not be repeated: {}.\n", names.join(", "))
    };
    let user = templates.render(
        "persona",
        &[("task", &task.text), ("exclusions_block", &exclusions_block)],
    )?;
    let system = templates.render("persona_system", &[])?;
    Ok(PromptBundle { system, user })
}

/// Parses a persona reply of the form `Name: description`.
pub fn parse_persona_reply(text: &str) -> Option<Persona> {
    let line = text.lines().find(|line| line.contains(':'))?;
    let (name, description) = line.split_once(':')?;
    let name = name.trim().trim_start_matches(['-', '*', ' ']).trim();
    let description = description.trim();
    if name.is_empty() || name.len() > 80 || description.is_empty() {
        return None;
    }
    Some(Persona::new(name, description))
}
