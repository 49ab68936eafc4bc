//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use debatelab::backends::{RequestTag, ScriptedBehavior, ScriptedRule};
use debatelab::domain::{AgentId, Persona};
use debatelab::harness::{BackendChoice, ExperimentArgs, RunRecord};
use debatelab::responders::PromptBundle;
use debatelab::{AnswerKind, DebateConfig, DecisionProtocol, InputSample};
use std::path::{Path, PathBuf};

pub fn test_agent(index: usize, name: &str) -> AgentId {
    AgentId {
        index,
        persona: Persona::new(name, format!("{name} test persona")),
        is_moderator: false,
    }
}

pub fn golden_agent() -> AgentId {
    AgentId {
        index: 0,
        persona: Persona::new(
            "Economist",
            "A researcher who studies the impact of biodiversity on economic systems.",
        ),
        is_moderator: false,
    }
}

pub fn golden_sample() -> InputSample {
    InputSample {
        id: "golden".into(),
        question: "What choir from the area has sung at the Guildhall?".into(),
        context: None,
        reference_answers: vec!["Southampton Philharmonic Choir".into()],
        choices: None,
    }
}

/// Golden files hold `system\n---\nuser`; both halves must match byte-for-byte
/// (modulo the file's trailing newline).
pub fn assert_golden(name: &str, bundle: &PromptBundle) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/{name}.golden"));
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
    let text = text.strip_suffix('\n').unwrap_or(&text);
    let (expected_system, expected_user) =
        text.split_once("\n---\n").unwrap_or_else(|| panic!("golden {name} lacks a --- separator"));
    assert_eq!(bundle.system, expected_system, "system prompt mismatch for {name}");
    assert_eq!(bundle.user, expected_user, "user prompt mismatch for {name}");
}

pub fn write_boolean_dataset(dir: &Path, count: usize) -> PathBuf {
    let entries: Vec<serde_json::Value> = (0..count)
        .map(|i| {
            serde_json::json!({
                "id": format!("q{i}"),
                "question": format!("Is statement number {i} true?"),
                "references": [if i % 2 == 0 { "yes" } else { "no" }],
            })
        })
        .collect();
    let path = dir.join("dataset.json");
    std::fs::write(&path, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    path
}

pub fn write_mmlu_style_dataset(dir: &Path, count: usize) -> PathBuf {
    let entries: Vec<serde_json::Value> = (0..count)
        .map(|i| {
            serde_json::json!({
                "id": format!("mc{i}"),
                "question": format!(
                    "Question {i}: which option is correct?\nA) first\nB) second\nC) third\nD) fourth"
                ),
                "references": ["A"],
                "choices": ["first", "second", "third", "fourth"],
            })
        })
        .collect();
    let path = dir.join("mmlu_style.json");
    std::fs::write(&path, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    path
}

/// Deterministic behavior with per-request variation: drafts differ by
/// prompt content, votes scatter, extraction echoes.
pub fn write_varied_behavior(dir: &Path) -> PathBuf {
    let behavior = ScriptedBehavior {
        rules: vec![
            ScriptedRule {
                tag: Some(RequestTag::Extraction),
                contains: None,
                turn: None,
                reply: "{previous_response}".into(),
            },
            ScriptedRule {
                tag: Some(RequestTag::Persona),
                contains: Some("Chronicler".into()),
                turn: None,
                reply: "Assessor: weighs the evidence for each answer.".into(),
            },
            ScriptedRule {
                tag: Some(RequestTag::Persona),
                contains: Some("Surveyor".into()),
                turn: None,
                reply: "Chronicler: keeps track of the discussion so far.".into(),
            },
            ScriptedRule {
                tag: Some(RequestTag::Persona),
                contains: None,
                turn: None,
                reply: "Surveyor: examines the question from first principles.".into(),
            },
            ScriptedRule {
                tag: Some(RequestTag::Vote),
                contains: None,
                turn: None,
                reply: "{pick:1|2|3}".into(),
            },
            ScriptedRule {
                tag: Some(RequestTag::Discussion),
                contains: None,
                turn: None,
                reply: "{pick:[AGREE]|[DISAGREE]|} turn {turn}: {pick:the answer is yes|the answer is no|it depends}".into(),
            },
        ],
        default_reply: "unmatched".into(),
    };
    let path = dir.join("behavior.json");
    std::fs::write(&path, serde_json::to_string_pretty(&behavior).unwrap()).unwrap();
    path
}

pub fn scripted_args(dataset: &Path, behavior: &Path, output: PathBuf) -> ExperimentArgs {
    ExperimentArgs {
        input: dataset.to_path_buf(),
        output,
        config: DebateConfig {
            max_turns: 5,
            use_chain_of_thought: false,
            concurrent_requests: 8,
            ..DebateConfig::default()
        },
        answer_kind: AnswerKind::Boolean,
        task_instruction: None,
        num_samples: None,
        shuffle_input_samples: false,
        sweep: None,
        backend: BackendChoice::Scripted { behavior: behavior.to_path_buf() },
        challenge: None,
        answer_diversity: false,
        embedding_endpoint: None,
        embedding_model: None,
        templates_dir: None,
    }
}

pub fn boolean_record(sample: &str, run: usize, score: f64) -> RunRecord {
    RunRecord {
        sample_id: sample.into(),
        run_index: run,
        config_label: "simple_voting".into(),
        config_fingerprint: "fp".into(),
        answer_kind: AnswerKind::Boolean,
        protocol: DecisionProtocol::SimpleVoting,
        final_answer: "yes".into(),
        reference_answers: vec!["yes".into()],
        unanswerable: false,
        score,
        decided: true,
        decision_turn: Some(3),
        fallback_used: false,
        agent_answers: Vec::new(),
        diversity: None,
        challenge: None,
        per_turn_records: Vec::new(),
        backend_calls: 0,
        duration_ms: None,
        error: None,
    }
}
