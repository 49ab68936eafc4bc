//! Multi-agent debate orchestration engine and evaluation harness.
//!
//! Debates run three pluggable components: a discussion paradigm (who speaks
//! and who sees what), a response generator (how agents are prompted), and a
//! decision protocol (how the final answer is selected — consensus
//! thresholds, four vote tallies, or a counting baseline). The harness layers
//! dataset sampling, scoring, repeated runs and aggregation on top, with a
//! deterministic scripted backend so every protocol is verifiable offline.

pub mod backends;
pub mod decision;
pub mod domain;
pub mod harness;
pub mod orchestration;
pub mod responders;

pub use domain::{
    canonical_answer, validate_config, AnswerKind, DebateConfig, DecisionProtocol,
    DiscussionParadigm, InputSample, Persona, ResponseGenerator, TaskInstruction, Transcript,
};
