//! Decision protocols: consensus threshold evaluation, the four ballot
//! tallies with tie semantics, ballot parsing, the solution-counting baseline
//! and per-turn decision bookkeeping.

use crate::domain::{canonical_answer, AgentId, AnswerKind, DebateConfig, DecisionProtocol};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Consensus agreement level. Majority and supermajority are strict ratio
/// thresholds; unanimity requires every agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusKind {
    Majority,
    Supermajority,
    Unanimity,
}

impl ConsensusKind {
    pub fn from_protocol(protocol: DecisionProtocol) -> Option<Self> {
        match protocol {
            DecisionProtocol::Majority => Some(Self::Majority),
            DecisionProtocol::Supermajority => Some(Self::Supermajority),
            DecisionProtocol::Unanimity => Some(Self::Unanimity),
            _ => None,
        }
    }
}

/// JSON objects key by string; these maps key by candidate index.
mod usize_key_map {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S, V>(map: &BTreeMap<usize, V>, serializer: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        V: Serialize,
    {
        serializer.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D, V>(deserializer: D) -> Result<BTreeMap<usize, V>, D::Error>
    where
        D: Deserializer<'de>,
        V: Deserialize<'de>,
    {
        let raw = BTreeMap::<String, V>::deserialize(deserializer)?;
        raw.into_iter()
            .map(|(k, v)| k.parse::<usize>().map(|k| (k, v)).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// One agent's vote in a protocol-specific shape. Candidate indices are
/// 0-based positions into the [`CandidateSet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotPayload {
    Single(usize),
    Ranking(Vec<usize>),
    Approvals(BTreeSet<usize>),
    Allocation(#[serde(with = "usize_key_map")] BTreeMap<usize, u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter: AgentId,
    pub payload: BallotPayload,
}

/// One candidate solution: the proposing agent and its extracted answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub proposer: AgentId,
    pub answer: String,
}

/// Candidate solutions in proposer turn order, one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Candidate>) -> Self {
        Self { candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn answers(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.answer.clone()).collect()
    }
}

/// Outcome of one tally. `winner` is present iff the best score is unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyResult {
    pub winner: Option<usize>,
    #[serde(with = "usize_key_map")]
    pub scores: BTreeMap<usize, u64>,
    pub tied: bool,
    pub tied_set: BTreeSet<usize>,
}

/// Per-turn record of what the decision protocol saw and concluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnRecord {
    Consensus {
        turn: u32,
        agreements: Vec<Option<bool>>,
        satisfied: bool,
    },
    Vote {
        turn: u32,
        ballots: Vec<BallotRecord>,
        tally: Option<TallyResult>,
        all_parse_failed: bool,
    },
    Counting {
        turn: u32,
        answers: Vec<String>,
        winner: String,
    },
}

/// One agent's cast ballot or its parse failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallotRecord {
    pub voter_index: usize,
    pub voter_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<BallotPayload>,
    /// Raw reply text kept when parsing failed after the retry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_raw: Option<String>,
}

/// Final result of one debate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub final_answer: String,
    pub decided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_turn: Option<u32>,
    pub protocol: DecisionProtocol,
    pub per_turn_records: Vec<TurnRecord>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DecisionError {
    #[error("no agents to evaluate")]
    NoAgents,
    #[error("agreement slate has {got} entries for {expected} agents")]
    SlateSizeMismatch { got: usize, expected: usize },
    #[error("empty ballot list")]
    EmptyBallots,
    #[error("duplicate ballot from voter {0}")]
    DuplicateVoter(usize),
    #[error("candidate index {index} out of range for {num_candidates} candidates")]
    CandidateOutOfRange { index: usize, num_candidates: usize },
    #[error("ranking must cover all {expected} candidates exactly once, got {got:?}")]
    InvalidRanking { expected: usize, got: Vec<usize> },
    #[error("allocation sums to {sum}, exceeding the budget of {budget}")]
    OverBudget { sum: u64, budget: u32 },
    #[error("empty answer list")]
    EmptyAnswers,
    #[error("ballot payload does not match protocol {0:?}")]
    PayloadMismatch(DecisionProtocol),
}

/// A voting reply that could not be parsed; the caller decides on a retry.
#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("could not parse ballot ({reason}): {raw:?}")]
pub struct ParseFailure {
    pub raw: String,
    pub reason: String,
}

impl ParseFailure {
    fn new(raw: &str, reason: impl Into<String>) -> Self {
        Self { raw: raw.to_string(), reason: reason.into() }
    }
}

/// True iff the agree count satisfies the kind's threshold. The proposer's
/// own slot is expected to be marked agree by the caller; a missing flag
/// counts as disagree.
pub fn evaluate_consensus(
    agreements: &[Option<bool>],
    kind: ConsensusKind,
    num_agents: usize,
) -> Result<bool, DecisionError> {
    if num_agents == 0 {
        return Err(DecisionError::NoAgents);
    }
    if agreements.len() != num_agents {
        return Err(DecisionError::SlateSizeMismatch { got: agreements.len(), expected: num_agents });
    }
    let agree_count = agreements.iter().filter(|a| **a == Some(true)).count();
    // Integer forms of the strict ratio thresholds: k/n > 0.5 and k/n > 0.66.
    Ok(match kind {
        ConsensusKind::Majority => 2 * agree_count > num_agents,
        ConsensusKind::Supermajority => 100 * agree_count > 66 * num_agents,
        ConsensusKind::Unanimity => agree_count == num_agents,
    })
}

fn check_voters(ballots: &[Ballot]) -> Result<(), DecisionError> {
    if ballots.is_empty() {
        return Err(DecisionError::EmptyBallots);
    }
    let mut seen = BTreeSet::new();
    for ballot in ballots {
        if !seen.insert(ballot.voter.index) {
            return Err(DecisionError::DuplicateVoter(ballot.voter.index));
        }
    }
    Ok(())
}

fn check_index(index: usize, num_candidates: usize) -> Result<(), DecisionError> {
    if index >= num_candidates {
        return Err(DecisionError::CandidateOutOfRange { index, num_candidates });
    }
    Ok(())
}

/// Builds the result from per-candidate scores. Every candidate gets an entry
/// (unscored ones at 0). `best_is_min` flips the optimum for rank sums.
fn result_from_scores(
    mut scores: BTreeMap<usize, u64>,
    num_candidates: usize,
    best_is_min: bool,
) -> TallyResult {
    for index in 0..num_candidates {
        scores.entry(index).or_insert(0);
    }
    let best = if best_is_min {
        scores.values().copied().min()
    } else {
        scores.values().copied().max()
    }
    .expect("non-empty candidate set");
    let tied_set: BTreeSet<usize> = scores
        .iter()
        .filter(|(_, score)| **score == best)
        .map(|(index, _)| *index)
        .collect();
    if tied_set.len() == 1 {
        TallyResult {
            winner: tied_set.iter().next().copied(),
            scores,
            tied: false,
            tied_set: BTreeSet::new(),
        }
    } else {
        TallyResult { winner: None, scores, tied: true, tied_set }
    }
}

/// Simple voting: one vote per agent, most votes wins.
pub fn tally_simple(ballots: &[Ballot], candidates: &CandidateSet) -> Result<TallyResult, DecisionError> {
    check_voters(ballots)?;
    let mut scores = BTreeMap::new();
    for ballot in ballots {
        let BallotPayload::Single(index) = &ballot.payload else {
            return Err(DecisionError::PayloadMismatch(DecisionProtocol::SimpleVoting));
        };
        check_index(*index, candidates.len())?;
        *scores.entry(*index).or_insert(0u64) += 1;
    }
    Ok(result_from_scores(scores, candidates.len(), false))
}

/// Ranked voting: score is the sum of 1-based positions; lowest rank sum wins.
/// Rankings must be total permutations of the candidate set.
pub fn tally_ranked(ballots: &[Ballot], candidates: &CandidateSet) -> Result<TallyResult, DecisionError> {
    check_voters(ballots)?;
    let mut scores = BTreeMap::new();
    for ballot in ballots {
        let BallotPayload::Ranking(ranking) = &ballot.payload else {
            return Err(DecisionError::PayloadMismatch(DecisionProtocol::RankedVoting));
        };
        let distinct: BTreeSet<usize> = ranking.iter().copied().collect();
        if ranking.len() != candidates.len() || distinct.len() != candidates.len() {
            return Err(DecisionError::InvalidRanking {
                expected: candidates.len(),
                got: ranking.clone(),
            });
        }
        for (position, index) in ranking.iter().enumerate() {
            check_index(*index, candidates.len())?;
            *scores.entry(*index).or_insert(0u64) += position as u64 + 1;
        }
    }
    Ok(result_from_scores(scores, candidates.len(), true))
}

/// Approval voting: unlimited votes per agent, most approvals wins.
pub fn tally_approval(ballots: &[Ballot], candidates: &CandidateSet) -> Result<TallyResult, DecisionError> {
    check_voters(ballots)?;
    let mut scores = BTreeMap::new();
    for ballot in ballots {
        let BallotPayload::Approvals(approvals) = &ballot.payload else {
            return Err(DecisionError::PayloadMismatch(DecisionProtocol::ApprovalVoting));
        };
        for index in approvals {
            check_index(*index, candidates.len())?;
            *scores.entry(*index).or_insert(0u64) += 1;
        }
    }
    Ok(result_from_scores(scores, candidates.len(), false))
}

/// Cumulative voting: each agent distributes up to `budget` points; most
/// points wins.
pub fn tally_cumulative(
    ballots: &[Ballot],
    candidates: &CandidateSet,
    budget: u32,
) -> Result<TallyResult, DecisionError> {
    check_voters(ballots)?;
    let mut scores = BTreeMap::new();
    for ballot in ballots {
        let BallotPayload::Allocation(allocation) = &ballot.payload else {
            return Err(DecisionError::PayloadMismatch(DecisionProtocol::CumulativeVoting));
        };
        let sum: u64 = allocation.values().map(|points| u64::from(*points)).sum();
        if sum > u64::from(budget) {
            return Err(DecisionError::OverBudget { sum, budget });
        }
        for (index, points) in allocation {
            check_index(*index, candidates.len())?;
            *scores.entry(*index).or_insert(0u64) += u64::from(*points);
        }
    }
    Ok(result_from_scores(scores, candidates.len(), false))
}

/// Baseline: the modal canonical answer, ties broken by the earliest
/// proposing agent. Returns the winning agent's original answer text.
pub fn solution_counting(
    final_answers: &[String],
    answer_kind: AnswerKind,
) -> Result<String, DecisionError> {
    if final_answers.is_empty() {
        return Err(DecisionError::EmptyAnswers);
    }
    let canonical: Vec<String> = final_answers
        .iter()
        .map(|answer| canonical_answer(answer, answer_kind))
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for key in &canonical {
        *counts.entry(key.as_str()).or_insert(0) += 1;
    }
    let best = *counts.values().max().expect("non-empty answers");
    // earliest agent whose canonical answer attains the modal count
    let winner_index = canonical
        .iter()
        .position(|key| counts[key.as_str()] == best)
        .expect("at least one modal answer");
    Ok(final_answers[winner_index].clone())
}

/// Parses a raw voting reply into the protocol's payload shape.
///
/// Simple and approval replies are 1-based per the voting prompts; ranked
/// replies are 0-based per the prompt's own example; cumulative replies are a
/// JSON dictionary with 1-based solution numbers as keys.
pub fn parse_ballot(
    raw_text: &str,
    protocol: DecisionProtocol,
    num_candidates: usize,
    budget: u32,
) -> Result<BallotPayload, ParseFailure> {
    match protocol {
        DecisionProtocol::SimpleVoting => {
            let value = first_integer(raw_text)
                .ok_or_else(|| ParseFailure::new(raw_text, "no integer found"))?;
            to_zero_based(value, num_candidates)
                .map(BallotPayload::Single)
                .map_err(|reason| ParseFailure::new(raw_text, reason))
        }
        DecisionProtocol::ApprovalVoting => {
            let values = all_integers(raw_text);
            if values.is_empty() {
                return Err(ParseFailure::new(raw_text, "no integers found"));
            }
            let mut approvals = BTreeSet::new();
            for value in values {
                let index = to_zero_based(value, num_candidates)
                    .map_err(|reason| ParseFailure::new(raw_text, reason))?;
                approvals.insert(index);
            }
            Ok(BallotPayload::Approvals(approvals))
        }
        DecisionProtocol::RankedVoting => {
            let values = all_integers(raw_text);
            if values.len() != num_candidates {
                return Err(ParseFailure::new(
                    raw_text,
                    format!("expected a full ranking of {num_candidates} solutions, got {}", values.len()),
                ));
            }
            // 0-based per the prompt example "0 2 1"
            let mut seen = BTreeSet::new();
            for &value in &values {
                if value as usize >= num_candidates {
                    return Err(ParseFailure::new(raw_text, format!("rank index {value} out of range")));
                }
                if !seen.insert(value) {
                    return Err(ParseFailure::new(raw_text, format!("duplicate rank index {value}")));
                }
            }
            Ok(BallotPayload::Ranking(values.into_iter().map(|v| v as usize).collect()))
        }
        DecisionProtocol::CumulativeVoting => {
            let block = first_brace_block(raw_text)
                .ok_or_else(|| ParseFailure::new(raw_text, "no JSON dictionary found"))?;
            let parsed: serde_json::Value = serde_json::from_str(block)
                .map_err(|e| ParseFailure::new(raw_text, format!("invalid JSON dictionary: {e}")))?;
            let map = parsed
                .as_object()
                .ok_or_else(|| ParseFailure::new(raw_text, "JSON value is not a dictionary"))?;
            let mut allocation = BTreeMap::new();
            let mut sum: u64 = 0;
            for (key, value) in map {
                let number: u64 = key
                    .trim()
                    .parse()
                    .map_err(|_| ParseFailure::new(raw_text, format!("non-integer key {key:?}")))?;
                let index = to_zero_based(number, num_candidates)
                    .map_err(|reason| ParseFailure::new(raw_text, reason))?;
                let points = value
                    .as_u64()
                    .or_else(|| value.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
                    .ok_or_else(|| ParseFailure::new(raw_text, format!("non-integer points {value}")))?;
                if points > u64::from(u32::MAX) {
                    return Err(ParseFailure::new(raw_text, "points value out of range"));
                }
                sum += points;
                *allocation.entry(index).or_insert(0u32) += points as u32;
            }
            if sum > u64::from(budget) {
                return Err(ParseFailure::new(
                    raw_text,
                    format!("allocation sums to {sum}, budget is {budget}"),
                ));
            }
            Ok(BallotPayload::Allocation(allocation))
        }
        DecisionProtocol::Majority
        | DecisionProtocol::Supermajority
        | DecisionProtocol::Unanimity
        | DecisionProtocol::SolutionCounting => {
            Err(ParseFailure::new(raw_text, format!("{} takes no ballots", protocol.name())))
        }
    }
}

fn to_zero_based(value: u64, num_candidates: usize) -> Result<usize, String> {
    if value == 0 || value as usize > num_candidates {
        Err(format!("solution number {value} out of range 1..={num_candidates}"))
    } else {
        Ok(value as usize - 1)
    }
}

fn first_integer(text: &str) -> Option<u64> {
    all_integers(text).into_iter().next()
}

/// Standalone base-10 integers in order of appearance.
fn all_integers(text: &str) -> Vec<u64> {
    let mut values = Vec::new();
    let mut current = String::new();
    for ch in text.chars().chain(std::iter::once(' ')) {
        if ch.is_ascii_digit() {
            current.push(ch);
        } else if !current.is_empty() {
            if let Ok(value) = current.parse() {
                values.push(value);
            }
            current.clear();
        }
    }
    values
}

fn first_brace_block(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    for (offset, ch) in text[start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Input to one decision evaluation.
#[derive(Debug, Clone)]
pub enum DecisionInput {
    /// Most recent agreement flags per agent; the proposer slot is agree.
    Agreements(Vec<Option<bool>>),
    /// One parse attempt per agent, already retried where applicable.
    Ballots(Vec<(AgentId, Result<BallotPayload, ParseFailure>)>),
    /// Latest extracted answers in agent order (solution counting).
    Answers { answers: Vec<String>, answer_kind: AnswerKind },
}

/// What one evaluation concluded.
#[derive(Debug, Clone, PartialEq)]
pub enum StepVerdict {
    /// For voting the winning candidate index is set; for consensus and
    /// counting the caller resolves the answer text.
    Decided { winning_candidate: Option<usize>, record: TurnRecord },
    Continue { record: Option<TurnRecord> },
}

/// Evaluates the protocol at one point of the debate.
///
/// Consensus is evaluated from turn 1; voting and counting only from the end
/// of turn `voting_starts_after_turn`. A tied vote (or a turn with unanimous
/// parse failure) continues the discussion for one more turn.
pub fn decide_step(
    input: DecisionInput,
    candidates: Option<&CandidateSet>,
    config: &DebateConfig,
    turn: u32,
) -> Result<StepVerdict, DecisionError> {
    match input {
        DecisionInput::Agreements(slate) => {
            let kind = ConsensusKind::from_protocol(config.decision_protocol)
                .expect("agreements input requires a consensus protocol");
            let satisfied = evaluate_consensus(&slate, kind, config.num_agents)?;
            let record = TurnRecord::Consensus { turn, agreements: slate, satisfied };
            if satisfied {
                Ok(StepVerdict::Decided { winning_candidate: None, record })
            } else {
                Ok(StepVerdict::Continue { record: Some(record) })
            }
        }
        DecisionInput::Ballots(attempts) => {
            if turn < config.voting_starts_after_turn {
                return Ok(StepVerdict::Continue { record: None });
            }
            let candidates = candidates.expect("ballots input requires a candidate set");
            let mut ballots = Vec::new();
            let mut records = Vec::new();
            for (voter, attempt) in attempts {
                match attempt {
                    Ok(payload) => {
                        records.push(BallotRecord {
                            voter_index: voter.index,
                            voter_name: voter.persona.name.clone(),
                            payload: Some(payload.clone()),
                            failed_raw: None,
                        });
                        ballots.push(Ballot { voter, payload });
                    }
                    Err(failure) => records.push(BallotRecord {
                        voter_index: voter.index,
                        voter_name: voter.persona.name.clone(),
                        payload: None,
                        failed_raw: Some(failure.raw),
                    }),
                }
            }
            if ballots.is_empty() {
                // unanimous parse failure counts as a tie
                let record = TurnRecord::Vote { turn, ballots: records, tally: None, all_parse_failed: true };
                return Ok(StepVerdict::Continue { record: Some(record) });
            }
            let tally = match config.decision_protocol {
                DecisionProtocol::SimpleVoting => tally_simple(&ballots, candidates)?,
                DecisionProtocol::RankedVoting => tally_ranked(&ballots, candidates)?,
                DecisionProtocol::ApprovalVoting => tally_approval(&ballots, candidates)?,
                DecisionProtocol::CumulativeVoting => {
                    tally_cumulative(&ballots, candidates, config.cumulative_point_budget)?
                }
                other => panic!("ballots input requires a voting protocol, got {other:?}"),
            };
            let winner = tally.winner;
            let record = TurnRecord::Vote { turn, ballots: records, tally: Some(tally), all_parse_failed: false };
            match winner {
                Some(index) => Ok(StepVerdict::Decided { winning_candidate: Some(index), record }),
                None => Ok(StepVerdict::Continue { record: Some(record) }),
            }
        }
        DecisionInput::Answers { answers, answer_kind } => {
            if turn < config.voting_starts_after_turn {
                return Ok(StepVerdict::Continue { record: None });
            }
            let winner = solution_counting(&answers, answer_kind)?;
            let record = TurnRecord::Counting { turn, answers, winner: winner.clone() };
            Ok(StepVerdict::Decided { winning_candidate: None, record })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Persona;
    use proptest::prelude::*;

    fn agent(index: usize, name: &str) -> AgentId {
        AgentId { index, persona: Persona::new(name, "test persona"), is_moderator: false }
    }

    fn candidates(names: &[&str]) -> CandidateSet {
        CandidateSet::new(
            names
                .iter()
                .enumerate()
                .map(|(i, name)| Candidate {
                    proposer: agent(i, name),
                    answer: format!("{name} answer"),
                })
                .collect(),
        )
    }

    fn single(voter: usize, choice: usize) -> Ballot {
        Ballot { voter: agent(voter, "v"), payload: BallotPayload::Single(choice) }
    }

    #[test]
    fn consensus_examples() {
        let slate = vec![Some(true), Some(true), Some(false)];
        assert!(evaluate_consensus(&slate, ConsensusKind::Majority, 3).unwrap());
        assert!(!evaluate_consensus(&slate, ConsensusKind::Unanimity, 3).unwrap());
        assert!(evaluate_consensus(&slate, ConsensusKind::Supermajority, 3).unwrap());
        let minority = vec![Some(true), Some(false), Some(false)];
        assert!(!evaluate_consensus(&minority, ConsensusKind::Majority, 3).unwrap());
    }

    #[test]
    fn consensus_missing_flags_count_as_disagree() {
        let slate = vec![Some(true), None, None];
        assert!(!evaluate_consensus(&slate, ConsensusKind::Majority, 3).unwrap());
        assert!(evaluate_consensus(&[Some(true)], ConsensusKind::Unanimity, 1).unwrap());
        assert!(evaluate_consensus(&[], ConsensusKind::Majority, 0).is_err());
    }

    #[test]
    fn consensus_threshold_boundaries() {
        for n in 1..=10usize {
            for k in 0..=n {
                let slate: Vec<Option<bool>> =
                    (0..n).map(|i| Some(i < k)).collect();
                let majority = evaluate_consensus(&slate, ConsensusKind::Majority, n).unwrap();
                assert_eq!(majority, k >= n / 2 + 1, "majority n={n} k={k}");
                let unanimity = evaluate_consensus(&slate, ConsensusKind::Unanimity, n).unwrap();
                assert_eq!(unanimity, k == n, "unanimity n={n} k={k}");
            }
        }
    }

    #[test]
    fn simple_tally_examples() {
        let set = candidates(&["Music Connoisseur", "Choir Conductor", "Music Journalist"]);
        let result = tally_simple(&[single(0, 2), single(1, 2), single(2, 2)], &set).unwrap();
        assert_eq!(result.winner, Some(2));
        assert_eq!(result.scores[&2], 3);
        assert!(!result.tied);

        let two = candidates(&["A", "B"]);
        let result = tally_simple(&[single(0, 0), single(1, 1)], &two).unwrap();
        assert!(result.tied);
        assert_eq!(result.tied_set, BTreeSet::from([0, 1]));
        assert_eq!(result.winner, None);

        let one = candidates(&["A"]);
        let result = tally_simple(&[single(0, 0)], &one).unwrap();
        assert_eq!(result.winner, Some(0));
    }

    #[test]
    fn simple_tally_rejects_duplicate_voter() {
        let set = candidates(&["A", "B"]);
        let err = tally_simple(&[single(0, 0), single(0, 1)], &set).unwrap_err();
        assert_eq!(err, DecisionError::DuplicateVoter(0));
    }

    #[test]
    fn ranked_tally_example() {
        let set = candidates(&["Music Journalist", "Local Music Expert", "Concert Promoter"]);
        let ranking = |voter: usize| Ballot {
            voter: agent(voter, "v"),
            payload: BallotPayload::Ranking(vec![0, 1, 2]),
        };
        let result = tally_ranked(&[ranking(0), ranking(1), ranking(2)], &set).unwrap();
        assert_eq!(result.scores[&0], 3);
        assert_eq!(result.scores[&1], 6);
        assert_eq!(result.scores[&2], 9);
        assert_eq!(result.winner, Some(0));
    }

    #[test]
    fn ranked_tally_symmetric_tie() {
        let set = candidates(&["A", "B"]);
        let ballots = vec![
            Ballot { voter: agent(0, "x"), payload: BallotPayload::Ranking(vec![0, 1]) },
            Ballot { voter: agent(1, "y"), payload: BallotPayload::Ranking(vec![1, 0]) },
        ];
        let result = tally_ranked(&ballots, &set).unwrap();
        assert!(result.tied);
        assert_eq!(result.scores[&0], 3);
        assert_eq!(result.scores[&1], 3);
    }

    #[test]
    fn ranked_tally_rejects_partial_or_duplicated() {
        let set = candidates(&["A", "B", "C"]);
        let partial = Ballot { voter: agent(0, "x"), payload: BallotPayload::Ranking(vec![0, 1]) };
        assert!(matches!(
            tally_ranked(&[partial], &set).unwrap_err(),
            DecisionError::InvalidRanking { .. }
        ));
        let duplicated = Ballot { voter: agent(0, "x"), payload: BallotPayload::Ranking(vec![0, 1, 1]) };
        assert!(tally_ranked(&[duplicated], &set).is_err());
    }

    #[test]
    fn approval_tally_examples() {
        let set = candidates(&["Music Critic", "Local Music Event Coordinator", "Information Architect"]);
        let approvals = |voter: usize, indices: &[usize]| Ballot {
            voter: agent(voter, "v"),
            payload: BallotPayload::Approvals(indices.iter().copied().collect()),
        };
        let result = tally_approval(
            &[approvals(0, &[2, 0]), approvals(1, &[2]), approvals(2, &[2])],
            &set,
        )
        .unwrap();
        assert_eq!(result.winner, Some(2));
        assert_eq!(result.scores[&2], 3);

        // everyone approves everything -> tie over all candidates
        let all = [approvals(0, &[0, 1, 2]), approvals(1, &[0, 1, 2]), approvals(2, &[0, 1, 2])];
        let result = tally_approval(&all, &set).unwrap();
        assert!(result.tied);
        assert_eq!(result.tied_set, BTreeSet::from([0, 1, 2]));

        let lone = [approvals(0, &[1])];
        assert_eq!(tally_approval(&lone, &set).unwrap().winner, Some(1));
    }

    #[test]
    fn cumulative_tally_example() {
        let set = candidates(&["Local Music Enthusiast", "Archivist", "Music Journalist"]);
        let alloc = |voter: usize, pairs: &[(usize, u32)]| Ballot {
            voter: agent(voter, "v"),
            payload: BallotPayload::Allocation(pairs.iter().copied().collect()),
        };
        let ballots = [
            alloc(0, &[(1, 9), (2, 1)]),
            alloc(1, &[(0, 2), (1, 4), (2, 4)]),
            alloc(2, &[(0, 1), (1, 2), (2, 7)]),
        ];
        let result = tally_cumulative(&ballots, &set, 10).unwrap();
        assert_eq!(result.scores[&1], 15);
        assert_eq!(result.scores[&2], 12);
        assert_eq!(result.scores[&0], 3);
        assert_eq!(result.winner, Some(1));
    }

    #[test]
    fn cumulative_tally_tie_and_budget() {
        let set = candidates(&["A", "B"]);
        let alloc = |voter: usize, pairs: &[(usize, u32)]| Ballot {
            voter: agent(voter, "v"),
            payload: BallotPayload::Allocation(pairs.iter().copied().collect()),
        };
        let even = [alloc(0, &[(0, 5), (1, 5)]), alloc(1, &[(0, 5), (1, 5)])];
        assert!(tally_cumulative(&even, &set, 10).unwrap().tied);

        let over = [alloc(0, &[(0, 6), (1, 5)])];
        assert!(matches!(
            tally_cumulative(&over, &set, 10).unwrap_err(),
            DecisionError::OverBudget { sum: 11, budget: 10 }
        ));
    }

    #[test]
    fn counting_examples() {
        let kind = AnswerKind::FreeText;
        let answers = |list: &[&str]| list.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(solution_counting(&answers(&["A", "A", "B"]), kind).unwrap(), "A");
        assert_eq!(solution_counting(&answers(&["A", "B"]), kind).unwrap(), "A");
        assert_eq!(solution_counting(&answers(&["B", "A", "A"]), kind).unwrap(), "A");
        assert!(solution_counting(&[], kind).is_err());
    }

    #[test]
    fn counting_uses_canonical_classes() {
        let answers = vec!["  Paris ".to_string(), "paris!".to_string(), "Rome".to_string()];
        assert_eq!(solution_counting(&answers, AnswerKind::FreeText).unwrap(), "  Paris ");
    }

    #[test]
    fn parse_ballot_examples() {
        assert_eq!(
            parse_ballot("2", DecisionProtocol::SimpleVoting, 3, 10).unwrap(),
            BallotPayload::Single(1)
        );
        assert_eq!(
            parse_ballot("1, 3", DecisionProtocol::ApprovalVoting, 3, 10).unwrap(),
            BallotPayload::Approvals(BTreeSet::from([0, 2]))
        );
        assert_eq!(
            parse_ballot("0 2 1", DecisionProtocol::RankedVoting, 3, 10).unwrap(),
            BallotPayload::Ranking(vec![0, 2, 1])
        );
        assert_eq!(
            parse_ballot(r#"{"1": 9, "3": 1}"#, DecisionProtocol::CumulativeVoting, 3, 10).unwrap(),
            BallotPayload::Allocation(BTreeMap::from([(0, 9), (2, 1)]))
        );
    }

    #[test]
    fn parse_ballot_failures() {
        assert!(parse_ballot("no numbers here", DecisionProtocol::SimpleVoting, 3, 10).is_err());
        assert!(parse_ballot("0", DecisionProtocol::SimpleVoting, 3, 10).is_err());
        assert!(parse_ballot("4", DecisionProtocol::SimpleVoting, 3, 10).is_err());
        // partial ranking is rejected
        assert!(parse_ballot("0 1", DecisionProtocol::RankedVoting, 3, 10).is_err());
        // over-budget allocation is rejected
        assert!(parse_ballot(r#"{"1": 11}"#, DecisionProtocol::CumulativeVoting, 3, 10).is_err());
        // prose around the dictionary is tolerated
        assert_eq!(
            parse_ballot(
                "Here is my allocation: {\"1\": 4, \"2\": 6} as requested.",
                DecisionProtocol::CumulativeVoting,
                3,
                10
            )
            .unwrap(),
            BallotPayload::Allocation(BTreeMap::from([(0, 4), (1, 6)]))
        );
    }

    #[test]
    fn decide_step_gates_voting_turns() {
        let config = DebateConfig::default(); // voting starts after turn 3
        let set = candidates(&["A", "B"]);
        let attempts = vec![
            (agent(0, "x"), Ok(BallotPayload::Single(0))),
            (agent(1, "y"), Ok(BallotPayload::Single(0))),
        ];
        let early = decide_step(DecisionInput::Ballots(attempts.clone()), Some(&set), &config, 2).unwrap();
        assert_eq!(early, StepVerdict::Continue { record: None });
        let on_time = decide_step(DecisionInput::Ballots(attempts), Some(&set), &config, 3).unwrap();
        assert!(matches!(on_time, StepVerdict::Decided { winning_candidate: Some(0), .. }));
    }

    #[test]
    fn decide_step_unanimous_parse_failure_is_a_tie() {
        let config = DebateConfig::default();
        let set = candidates(&["A", "B"]);
        let failure = ParseFailure::new("garbage", "no integer found");
        let attempts = vec![
            (agent(0, "x"), Err(failure.clone())),
            (agent(1, "y"), Err(failure)),
        ];
        let verdict = decide_step(DecisionInput::Ballots(attempts), Some(&set), &config, 4).unwrap();
        match verdict {
            StepVerdict::Continue { record: Some(TurnRecord::Vote { all_parse_failed, .. }) } => {
                assert!(all_parse_failed)
            }
            other => panic!("unexpected verdict {other:?}"),
        }
    }

    #[test]
    fn decide_step_consensus_from_turn_one() {
        let config = DebateConfig {
            decision_protocol: DecisionProtocol::Majority,
            ..DebateConfig::default()
        };
        let slate = vec![Some(true), Some(true), None];
        let verdict =
            decide_step(DecisionInput::Agreements(slate), None, &config, 1).unwrap();
        assert!(matches!(verdict, StepVerdict::Decided { winning_candidate: None, .. }));
    }

    proptest! {
        #[test]
        fn tallies_are_ballot_order_invariant(
            votes in proptest::collection::vec(0usize..4, 2..8),
            rotation in 0usize..8,
        ) {
            let set = candidates(&["A", "B", "C", "D"]);
            let ballots: Vec<Ballot> = votes.iter().enumerate().map(|(i, &v)| single(i, v)).collect();
            let mut rotated = ballots.clone();
            rotated.rotate_left(rotation % ballots.len());
            let a = tally_simple(&ballots, &set).unwrap();
            let b = tally_simple(&rotated, &set).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn consensus_is_monotone_in_agreement(
            flags in proptest::collection::vec(proptest::option::of(proptest::bool::ANY), 1..10),
            flip in 0usize..10,
            kind_idx in 0usize..3,
        ) {
            let kind = [ConsensusKind::Majority, ConsensusKind::Supermajority, ConsensusKind::Unanimity][kind_idx];
            let n = flags.len();
            let before = evaluate_consensus(&flags, kind, n).unwrap();
            let mut flipped = flags.clone();
            let at = flip % n;
            flipped[at] = Some(true);
            let after = evaluate_consensus(&flipped, kind, n).unwrap();
            prop_assert!(!(before && !after), "flipping to agree must never break consensus");
        }
    }
}
