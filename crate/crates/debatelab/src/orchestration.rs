//! The debate state machine: paradigm scheduling and visibility, the turn
//! loop, AAD first-draft handling, CI refinement, termination, and the
//! challenge-ablation driver.

use crate::backends::{BackendError, CompletionBackend, CompletionRequest, RequestTag};
use crate::decision::{
    decide_step, CandidateSet, Candidate, DecisionError, DecisionInput, DecisionOutcome,
    ParseFailure, StepVerdict, TurnRecord,
};
use crate::domain::{
    validate_config, AgentId, ConfigError, DebateConfig, DecisionProtocol, DiscussionParadigm,
    InputSample, Message, Persona, TaskInstruction, Transcript,
};
use crate::responders::{
    build_challenge_prompts, build_discussion_prompt, build_extraction_prompt, build_voting_prompt,
    extract_agreement, ChallengeScenario, PromptError, TemplateSet,
};
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrchestrationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error("personas: {0}")]
    Personas(String),
}

/// Result of the post-debate challenge step. `improved` is filled by the
/// harness once the revised answer has been scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeResult {
    pub challenged: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improved: Option<bool>,
}

/// Builds the agent roster; the moderator, when the paradigm needs one, is
/// always index 0.
pub fn build_agents(config: &DebateConfig, personas: &[Persona]) -> Vec<AgentId> {
    personas
        .iter()
        .enumerate()
        .map(|(index, persona)| AgentId {
            index,
            persona: persona.clone(),
            is_moderator: config.discussion_paradigm.requires_moderator() && index == 0,
        })
        .collect()
}

/// Agent indices in speaking order for one turn. Memory, relay and CI are
/// round-robin; report and debate interleave the moderator at the end of the
/// turn, after the panel.
pub fn speaking_order(
    paradigm: DiscussionParadigm,
    _turn: u32,
    num_agents: usize,
    debate_rounds: u32,
) -> Vec<usize> {
    match paradigm {
        DiscussionParadigm::Memory
        | DiscussionParadigm::Relay
        | DiscussionParadigm::CollectiveRefinement => (0..num_agents).collect(),
        DiscussionParadigm::Report => (1..num_agents).chain(std::iter::once(0)).collect(),
        DiscussionParadigm::Debate => {
            let mut order = Vec::with_capacity((num_agents - 1) * debate_rounds as usize + 1);
            for _ in 0..debate_rounds {
                order.extend(1..num_agents);
            }
            order.push(0);
            order
        }
    }
}

/// Messages the viewer may see at this point of the transcript, per the
/// paradigm's visibility rule and the memory window.
pub fn visible_context<'t>(
    paradigm: DiscussionParadigm,
    viewer: &AgentId,
    transcript: &'t Transcript,
    window: u32,
) -> Vec<&'t Message> {
    let messages = transcript.messages();
    let max_turn = transcript.max_turn();
    let in_window = |m: &Message| m.turn + window > max_turn;
    match paradigm {
        DiscussionParadigm::Memory => messages.iter().filter(|m| in_window(m)).collect(),
        DiscussionParadigm::Relay => messages.last().into_iter().collect(),
        DiscussionParadigm::Report => {
            if viewer.is_moderator {
                messages.iter().filter(|m| in_window(m)).collect()
            } else {
                messages
                    .iter()
                    .filter(|m| {
                        in_window(m) && (m.author.is_moderator || m.author.index == viewer.index)
                    })
                    .collect()
            }
        }
        DiscussionParadigm::Debate => {
            if viewer.is_moderator {
                return messages.iter().filter(|m| in_window(m)).collect();
            }
            // The moderator closes every turn, so a trailing moderator message
            // (or an empty transcript) means a fresh debate round is starting.
            let generating_turn = match messages.last() {
                None => 1,
                Some(last) if last.author.is_moderator => last.turn + 1,
                Some(last) => last.turn,
            };
            let opener = messages.iter().rposition(|m| m.author.is_moderator);
            messages
                .iter()
                .enumerate()
                .filter(|(i, m)| {
                    (m.turn == generating_turn && !m.author.is_moderator) || Some(*i) == opener
                })
                .map(|(_, m)| m)
                .collect()
        }
        DiscussionParadigm::CollectiveRefinement => {
            // all previous-turn messages, none from the turn being generated
            messages.iter().filter(|m| max_turn > 0 && m.turn == max_turn).collect()
        }
    }
}

struct DebateState<'a> {
    config: &'a DebateConfig,
    task: &'a TaskInstruction,
    sample: &'a InputSample,
    backend: &'a dyn CompletionBackend,
    templates: &'a TemplateSet,
    agents: Vec<AgentId>,
    transcript: Transcript,
    records: Vec<TurnRecord>,
    /// Most recent agreement flags per agent for the current proposal.
    slate: Vec<Option<bool>>,
    /// Message index of the solution the slate refers to.
    proposal: Option<usize>,
}

impl<'a> DebateState<'a> {
    fn request(&self, tag: RequestTag, bundle: crate::responders::PromptBundle, turn: Option<u32>) -> CompletionRequest {
        CompletionRequest::from_bundle(tag, bundle, turn, self.config.temperature)
    }

    fn visible_for(&self, agent: &AgentId, turn: u32) -> Vec<&Message> {
        if self.config.all_agents_draft_first && turn == 1 {
            return Vec::new();
        }
        visible_context(
            self.config.discussion_paradigm,
            agent,
            &self.transcript,
            self.config.visible_turns_in_memory,
        )
    }

    async fn speak(&mut self, agent_index: usize, turn: u32) -> Result<usize, OrchestrationError> {
        let agent = self.agents[agent_index].clone();
        let bundle = {
            let visible = self.visible_for(&agent, turn);
            build_discussion_prompt(
                self.templates,
                self.config.response_generator,
                &agent,
                self.task,
                self.sample,
                &visible,
                turn,
                self.config.use_chain_of_thought,
            )?
        };
        let request = self.request(RequestTag::Discussion, bundle, Some(turn));
        let text = self.backend.complete(&request).await?;
        Ok(self.push_message(agent, turn, text))
    }

    fn push_message(&mut self, agent: AgentId, turn: u32, text: String) -> usize {
        let agreement = if self.config.response_generator.requests_agreement() {
            extract_agreement(&text)
        } else {
            None
        };
        let index = self.transcript.push(Message {
            turn,
            author: agent,
            text,
            agreement,
            extracted_solution: None,
        });
        if self.config.decision_protocol.is_consensus() {
            self.update_slate(index);
        }
        index
    }

    /// A message without an agreement marker proposes a new solution and
    /// resets the slate; marked messages record their flag for the current
    /// proposal. The proposer's own slot counts as agree.
    fn update_slate(&mut self, message_index: usize) {
        let message = &self.transcript.messages()[message_index];
        let author = message.author.index;
        match message.agreement {
            Some(flag) if self.proposal.is_some() => self.slate[author] = Some(flag),
            _ => {
                self.proposal = Some(message_index);
                self.slate = vec![None; self.agents.len()];
                self.slate[author] = Some(true);
            }
        }
    }

    /// Runs (and memoizes) final-answer extraction for one message.
    async fn extract_message(&mut self, index: usize) -> Result<String, OrchestrationError> {
        if let Some(solution) = &self.transcript.messages()[index].extracted_solution {
            return Ok(solution.clone());
        }
        let (bundle, turn) = {
            let message = &self.transcript.messages()[index];
            let bundle = build_extraction_prompt(
                self.templates,
                &message.author,
                self.task,
                self.sample,
                &message.text,
            )?;
            (bundle, message.turn)
        };
        let request = self.request(RequestTag::Extraction, bundle, Some(turn));
        let reply = self.backend.complete(&request).await?;
        let solution = reply.trim().to_string();
        self.transcript.set_extracted(index, solution.clone());
        Ok(solution)
    }

    /// Latest extracted solution of one agent.
    async fn extract_latest_of(&mut self, agent_index: usize) -> Result<String, OrchestrationError> {
        let message_index = self
            .transcript
            .last_message_of(agent_index)
            .expect("agent spoke at least once before extraction");
        self.extract_message(message_index).await
    }

    /// One candidate per agent, in proposer turn order.
    async fn collect_candidates(&mut self) -> Result<CandidateSet, OrchestrationError> {
        let mut candidates = Vec::with_capacity(self.agents.len());
        for agent_index in 0..self.agents.len() {
            let answer = self.extract_latest_of(agent_index).await?;
            candidates.push(Candidate { proposer: self.agents[agent_index].clone(), answer });
        }
        Ok(CandidateSet::new(candidates))
    }

    /// Solicits one ballot per agent, re-requesting a malformed ballot once.
    async fn solicit_ballots(
        &mut self,
        candidates: &CandidateSet,
        turn: u32,
    ) -> Result<Vec<(AgentId, Result<crate::decision::BallotPayload, ParseFailure>)>, OrchestrationError>
    {
        let answers = candidates.answers();
        let protocol = self.config.decision_protocol;
        let budget = self.config.cumulative_point_budget;
        let mut attempts = Vec::with_capacity(self.agents.len());
        for agent in self.agents.clone() {
            let bundle = build_voting_prompt(
                self.templates,
                protocol,
                &agent,
                self.task,
                self.sample,
                &answers,
                budget,
            )?;
            let request = self.request(RequestTag::Vote, bundle, Some(turn));
            let reply = self.backend.complete(&request).await?;
            let mut parsed = crate::decision::parse_ballot(&reply, protocol, answers.len(), budget);
            if parsed.is_err() {
                let retry_reply = self.backend.complete(&request).await?;
                parsed = crate::decision::parse_ballot(&retry_reply, protocol, answers.len(), budget);
            }
            attempts.push((agent, parsed));
        }
        Ok(attempts)
    }

    /// Collective refinement: all agents speak once per turn from an
    /// identical snapshot; completions run concurrently and are appended in
    /// agent order so the transcript stays deterministic.
    async fn refinement_turn(&mut self, turn: u32) -> Result<(), OrchestrationError> {
        let mut requests = Vec::with_capacity(self.agents.len());
        for agent in &self.agents {
            let visible = self.visible_for(agent, turn);
            let bundle = build_discussion_prompt(
                self.templates,
                self.config.response_generator,
                agent,
                self.task,
                self.sample,
                &visible,
                turn,
                self.config.use_chain_of_thought,
            )?;
            requests.push(self.request(RequestTag::Discussion, bundle, Some(turn)));
        }
        let replies = join_all(requests.iter().map(|req| self.backend.complete(req))).await;
        for (agent, reply) in self.agents.clone().into_iter().zip(replies) {
            self.push_message(agent, turn, reply?);
        }
        Ok(())
    }
}

/// Runs one debate to its decision and returns the outcome with the full
/// transcript and per-turn records.
pub async fn run_debate(
    config: &DebateConfig,
    task: &TaskInstruction,
    sample: &InputSample,
    backend: &dyn CompletionBackend,
    templates: &TemplateSet,
    personas: &[Persona],
) -> Result<(DecisionOutcome, Transcript), OrchestrationError> {
    let config = validate_config(config.clone())?;
    if personas.len() != config.num_agents {
        return Err(OrchestrationError::Personas(format!(
            "expected {} personas, got {}",
            config.num_agents,
            personas.len()
        )));
    }
    for (i, a) in personas.iter().enumerate() {
        if personas[..i].iter().any(|b| b.name == a.name) {
            return Err(OrchestrationError::Personas(format!("duplicate persona name {:?}", a.name)));
        }
    }

    let agents = build_agents(&config, personas);
    let num_agents = agents.len();
    let mut state = DebateState {
        config: &config,
        task,
        sample,
        backend,
        templates,
        agents,
        transcript: Transcript::new(),
        records: Vec::new(),
        slate: vec![None; num_agents],
        proposal: None,
    };
    let protocol = config.decision_protocol;
    let mut decided: Option<(String, u32)> = None;

    'debate: for turn in 1..=config.max_turns {
        if config.discussion_paradigm == DiscussionParadigm::CollectiveRefinement {
            state.refinement_turn(turn).await?;
            if protocol.is_consensus() {
                // unreachable through validate_config; CI is voting-only
                unreachable!("collective refinement with a consensus protocol");
            }
        } else {
            let order =
                speaking_order(config.discussion_paradigm, turn, num_agents, config.debate_rounds);
            for agent_index in order {
                let message_index = state.speak(agent_index, turn).await?;
                if protocol.is_consensus() {
                    let verdict = decide_step(
                        DecisionInput::Agreements(state.slate.clone()),
                        None,
                        &config,
                        turn,
                    )?;
                    match verdict {
                        StepVerdict::Decided { record, .. } => {
                            state.records.push(record);
                            let proposal = state.proposal.unwrap_or(message_index);
                            let answer = state.extract_message(proposal).await?;
                            decided = Some((answer, turn));
                            break 'debate;
                        }
                        StepVerdict::Continue { record } => {
                            state.records.extend(record);
                        }
                    }
                }
            }
        }

        // A single agent cannot vote or count: its extracted answer is final.
        if num_agents == 1 && !protocol.is_consensus() {
            let answer = state.extract_latest_of(0).await?;
            decided = Some((answer, turn));
            break 'debate;
        }

        if protocol.is_voting() && turn >= config.voting_starts_after_turn {
            let candidates = state.collect_candidates().await?;
            let attempts = state.solicit_ballots(&candidates, turn).await?;
            let verdict =
                decide_step(DecisionInput::Ballots(attempts), Some(&candidates), &config, turn)?;
            match verdict {
                StepVerdict::Decided { winning_candidate, record } => {
                    state.records.push(record);
                    let index = winning_candidate.expect("voting decisions carry a winner");
                    decided = Some((candidates.candidates[index].answer.clone(), turn));
                    break 'debate;
                }
                StepVerdict::Continue { record } => {
                    // a tie extends the discussion by one more turn
                    state.records.extend(record);
                }
            }
        }

        if protocol == DecisionProtocol::SolutionCounting && turn >= config.voting_starts_after_turn
        {
            let mut answers = Vec::with_capacity(num_agents);
            for agent_index in 0..num_agents {
                answers.push(state.extract_latest_of(agent_index).await?);
            }
            let verdict = decide_step(
                DecisionInput::Answers { answers, answer_kind: task.answer_kind },
                None,
                &config,
                turn,
            )?;
            if let StepVerdict::Decided { record, .. } = verdict {
                let winner = match &record {
                    TurnRecord::Counting { winner, .. } => winner.clone(),
                    other => unreachable!("counting produced {other:?}"),
                };
                state.records.push(record);
                decided = Some((winner, turn));
                break 'debate;
            }
        }
    }

    let outcome = match decided {
        Some((final_answer, decision_turn)) => DecisionOutcome {
            final_answer,
            decided: true,
            decision_turn: Some(decision_turn),
            protocol,
            per_turn_records: state.records,
            fallback_used: false,
        },
        None => {
            // turn limit without a decision: the first agent's solution is used
            let final_answer = state.extract_latest_of(0).await?;
            DecisionOutcome {
                final_answer,
                decided: false,
                decision_turn: None,
                protocol,
                per_turn_records: state.records,
                fallback_used: true,
            }
        }
    };
    Ok((outcome, state.transcript))
}

/// Extracts every agent's latest solution (memoized in the transcript);
/// used for the answer-diversity metric and the per-record answer listing.
pub async fn collect_agent_answers(
    config: &DebateConfig,
    task: &TaskInstruction,
    sample: &InputSample,
    backend: &dyn CompletionBackend,
    templates: &TemplateSet,
    personas: &[Persona],
    transcript: &mut Transcript,
) -> Result<Vec<String>, OrchestrationError> {
    let agents = build_agents(config, personas);
    let mut answers = Vec::with_capacity(agents.len());
    for agent in &agents {
        let Some(index) = transcript.last_message_of(agent.index) else {
            continue;
        };
        if let Some(solution) = &transcript.messages()[index].extracted_solution {
            answers.push(solution.clone());
            continue;
        }
        let message = &transcript.messages()[index];
        let bundle =
            build_extraction_prompt(templates, &message.author, task, sample, &message.text)?;
        let request =
            CompletionRequest::from_bundle(RequestTag::Extraction, bundle, Some(message.turn), config.temperature);
        let solution = backend.complete(&request).await?.trim().to_string();
        transcript.set_extracted(index, solution.clone());
        answers.push(solution);
    }
    Ok(answers)
}

/// Post-debate challenge: every agent may reject the final answer under the
/// scenario's information level; the first challenger's revision replaces
/// the answer for scoring. An unparseable reply counts as AGREE after one
/// retry.
pub async fn run_challenge(
    config: &DebateConfig,
    task: &TaskInstruction,
    sample: &InputSample,
    final_answer: &str,
    transcript: &Transcript,
    scenario: &ChallengeScenario,
    backend: &dyn CompletionBackend,
    templates: &TemplateSet,
    personas: &[Persona],
) -> Result<ChallengeResult, OrchestrationError> {
    let agents = build_agents(config, personas);
    let mut challenged = vec![false; agents.len()];
    let mut revised_answer: Option<String> = None;
    for agent in &agents {
        let (challenge_bundle, revision_bundle) = build_challenge_prompts(
            templates, scenario, agent, task, sample, final_answer, transcript,
        )?;
        let request = CompletionRequest::from_bundle(
            RequestTag::Challenge,
            challenge_bundle,
            None,
            config.temperature,
        );
        let mut verdict = extract_agreement(&backend.complete(&request).await?);
        if verdict.is_none() {
            verdict = extract_agreement(&backend.complete(&request).await?);
        }
        if verdict == Some(false) {
            challenged[agent.index] = true;
            let revision_request = CompletionRequest::from_bundle(
                RequestTag::Challenge,
                revision_bundle,
                None,
                config.temperature,
            );
            let revision = backend.complete(&revision_request).await?;
            if revised_answer.is_none() {
                revised_answer = Some(revision.trim().to_string());
            }
        }
    }
    Ok(ChallengeResult { challenged, revised_answer, improved: None })
}

/// Which field a scaling sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Discussion rounds before voting, 1..=10, with the base agent count.
    Rounds,
    /// Agent count 1..=10 with the base pre-vote round count.
    Agents,
}

/// Produces the ten sweep configurations, each varying exactly one field of
/// the base config.
pub fn schedule_scaling_sweep(
    kind: SweepKind,
    base: &DebateConfig,
) -> Result<Vec<DebateConfig>, ConfigError> {
    if base.decision_protocol != DecisionProtocol::SimpleVoting {
        return Err(ConfigError {
            field: "decision_protocol",
            reason: "scaling sweeps use simple voting".into(),
        });
    }
    match kind {
        SweepKind::Rounds => {
            if base.max_turns <= 10 {
                return Err(ConfigError {
                    field: "max_turns",
                    reason: format!(
                        "the rounds sweep reaches voting_starts_after_turn=10 and needs max_turns > 10, got {}",
                        base.max_turns
                    ),
                });
            }
            (1..=10)
                .map(|rounds| {
                    validate_config(DebateConfig { voting_starts_after_turn: rounds, ..base.clone() })
                })
                .collect()
        }
        SweepKind::Agents => (1..=10)
            .map(|agents| validate_config(DebateConfig { num_agents: agents, ..base.clone() }))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AnswerKind;

    fn agent(index: usize, moderator: bool) -> AgentId {
        AgentId {
            index,
            persona: Persona::new(format!("P{index}"), "d"),
            is_moderator: moderator,
        }
    }

    fn msg(turn: u32, index: usize, moderator: bool) -> Message {
        Message {
            turn,
            author: agent(index, moderator),
            text: format!("text t{turn} a{index}"),
            agreement: None,
            extracted_solution: None,
        }
    }

    #[test]
    fn memory_visibility_honors_window() {
        let mut transcript = Transcript::new();
        for turn in 1..=4 {
            for index in 0..3 {
                transcript.push(msg(turn, index, false));
            }
        }
        let visible = visible_context(DiscussionParadigm::Memory, &agent(0, false), &transcript, 2);
        assert_eq!(visible.len(), 6);
        assert!(visible.iter().all(|m| m.turn == 3 || m.turn == 4));
    }

    #[test]
    fn relay_shows_exactly_the_previous_message() {
        let mut transcript = Transcript::new();
        transcript.push(msg(1, 0, false));
        transcript.push(msg(1, 1, false));
        let visible = visible_context(DiscussionParadigm::Relay, &agent(2, false), &transcript, 2);
        assert_eq!(visible.len(), 1);
        assert_eq!(visible[0].author.index, 1);
        let empty = Transcript::new();
        assert!(visible_context(DiscussionParadigm::Relay, &agent(0, false), &empty, 2).is_empty());
    }

    #[test]
    fn report_routes_messages_through_the_moderator() {
        let mut transcript = Transcript::new();
        transcript.push(msg(1, 1, false));
        transcript.push(msg(1, 2, false));
        transcript.push(msg(1, 0, true));
        let panelist = agent(1, false);
        let visible = visible_context(DiscussionParadigm::Report, &panelist, &transcript, 2);
        assert!(visible.iter().all(|m| m.author.is_moderator || m.author.index == 1));
        assert_eq!(visible.len(), 2);
        let moderator = agent(0, true);
        let all = visible_context(DiscussionParadigm::Report, &moderator, &transcript, 2);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn collective_refinement_sees_only_previous_turn() {
        let mut transcript = Transcript::new();
        for index in 0..3 {
            transcript.push(msg(1, index, false));
        }
        let visible =
            visible_context(DiscussionParadigm::CollectiveRefinement, &agent(0, false), &transcript, 2);
        assert_eq!(visible.len(), 3);
        assert!(visible.iter().all(|m| m.turn == 1));
        let empty = Transcript::new();
        assert!(visible_context(
            DiscussionParadigm::CollectiveRefinement,
            &agent(0, false),
            &empty,
            2
        )
        .is_empty());
    }

    #[test]
    fn debate_panelists_see_current_round_and_opener() {
        let mut transcript = Transcript::new();
        // turn 1: panel (two rounds), then moderator summary
        transcript.push(msg(1, 1, false));
        transcript.push(msg(1, 2, false));
        transcript.push(msg(1, 1, false));
        transcript.push(msg(1, 2, false));
        transcript.push(msg(1, 0, true));
        // opening turn 2: panelist sees the moderator summary only
        let visible = visible_context(DiscussionParadigm::Debate, &agent(1, false), &transcript, 2);
        assert_eq!(visible.len(), 1);
        assert!(visible[0].author.is_moderator);
        // mid-turn 2: current panel exchange plus the opener
        transcript.push(msg(2, 1, false));
        let visible = visible_context(DiscussionParadigm::Debate, &agent(2, false), &transcript, 2);
        assert_eq!(visible.len(), 2);
        assert!(visible.iter().any(|m| m.author.is_moderator));
        assert!(visible.iter().any(|m| m.turn == 2 && m.author.index == 1));
        // turn-1 panel messages never leak into turn 2
        assert!(visible.iter().all(|m| m.turn == 2 || m.author.is_moderator));
    }

    #[test]
    fn speaking_orders() {
        assert_eq!(speaking_order(DiscussionParadigm::Memory, 1, 3, 2), vec![0, 1, 2]);
        assert_eq!(speaking_order(DiscussionParadigm::Report, 1, 3, 2), vec![1, 2, 0]);
        assert_eq!(speaking_order(DiscussionParadigm::Debate, 1, 3, 2), vec![1, 2, 1, 2, 0]);
    }

    #[test]
    fn sweep_configs_vary_one_field() {
        let base = DebateConfig { max_turns: 12, ..DebateConfig::default() };
        let rounds = schedule_scaling_sweep(SweepKind::Rounds, &base).unwrap();
        assert_eq!(rounds.len(), 10);
        assert_eq!(rounds[3].voting_starts_after_turn, 4);
        assert_eq!(rounds[3].num_agents, 3);
        let agents = schedule_scaling_sweep(SweepKind::Agents, &base).unwrap();
        assert_eq!(agents[0].num_agents, 1);
        assert_eq!(agents[9].num_agents, 10);
        assert_eq!(agents[9].voting_starts_after_turn, 3);
    }

    #[test]
    fn sweep_rejects_wrong_protocol_or_turn_budget() {
        let consensus = DebateConfig {
            decision_protocol: DecisionProtocol::Majority,
            max_turns: 12,
            ..DebateConfig::default()
        };
        assert!(schedule_scaling_sweep(SweepKind::Rounds, &consensus).is_err());
        let tight = DebateConfig::default(); // max_turns = 10
        assert!(schedule_scaling_sweep(SweepKind::Rounds, &tight).is_err());
        assert!(schedule_scaling_sweep(SweepKind::Agents, &tight).is_ok());
    }

    #[tokio::test]
    async fn scripted_voting_trace_matches_the_tally() {
        use crate::backends::{ScriptedBackend, ScriptedBehavior, ScriptedRule};
        use crate::decision::{tally_simple, Ballot, BallotPayload};
        // distinct fixed answers per persona (the persona name is in the
        // system prompt), every vote for solution 3
        let rule = |contains: Option<&str>, tag, reply: &str| ScriptedRule {
            tag: Some(tag),
            contains: contains.map(str::to_string),
            turn: None,
            reply: reply.to_string(),
        };
        let behavior = ScriptedBehavior {
            rules: vec![
                rule(None, RequestTag::Extraction, "{previous_response}"),
                rule(None, RequestTag::Vote, "3"),
                rule(Some("Your role: Apple"), RequestTag::Discussion, "apple"),
                rule(Some("Your role: Banana"), RequestTag::Discussion, "banana"),
                rule(Some("Your role: Cherry"), RequestTag::Discussion, "cherry"),
            ],
            default_reply: "unused".into(),
        };
        let backend = ScriptedBackend::new(behavior, 0);
        let config = DebateConfig { use_chain_of_thought: false, ..DebateConfig::default() };
        let task = TaskInstruction::default_for(crate::domain::AnswerKind::FreeText);
        let sample = InputSample {
            id: "fruit".into(),
            question: "pick a fruit".into(),
            context: None,
            reference_answers: vec!["cherry".into()],
            choices: None,
        };
        let personas =
            vec![Persona::new("Apple", "a"), Persona::new("Banana", "b"), Persona::new("Cherry", "c")];
        let (outcome, _) = run_debate(
            &config,
            &task,
            &sample,
            &backend,
            &TemplateSet::builtin(),
            &personas,
        )
        .await
        .unwrap();
        assert!(outcome.decided);
        assert_eq!(outcome.decision_turn, Some(3));
        assert_eq!(outcome.final_answer, "cherry", "agent 2's answer wins");
        // cross-check against the tally on the same ballots
        let agents = build_agents(&config, &personas);
        let ballots: Vec<Ballot> = agents
            .iter()
            .map(|agent| Ballot { voter: agent.clone(), payload: BallotPayload::Single(2) })
            .collect();
        let candidates = CandidateSet::new(
            [("Apple", "apple"), ("Banana", "banana"), ("Cherry", "cherry")]
                .iter()
                .enumerate()
                .map(|(i, (name, answer))| Candidate {
                    proposer: AgentId {
                        index: i,
                        persona: Persona::new(*name, "x"),
                        is_moderator: false,
                    },
                    answer: answer.to_string(),
                })
                .collect(),
        );
        let tally = tally_simple(&ballots, &candidates).unwrap();
        assert_eq!(tally.winner, Some(2));
        assert_eq!(candidates.candidates[2].answer, outcome.final_answer);
    }

    #[tokio::test]
    async fn agreeable_debate_decides_majority_at_turn_one() {
        use crate::backends::{ScriptedBackend, ScriptedBehavior, ScriptedRule};
        let behavior = ScriptedBehavior {
            rules: vec![
                ScriptedRule {
                    tag: Some(RequestTag::Extraction),
                    contains: None,
                    turn: None,
                    reply: "{previous_response}".into(),
                },
                ScriptedRule {
                    tag: Some(RequestTag::Discussion),
                    contains: Some("Current discussion:".into()),
                    turn: None,
                    reply: "[AGREE] the proposal stands".into(),
                },
            ],
            default_reply: "The answer is blue".into(),
        };
        let backend = ScriptedBackend::new(behavior, 1);
        let config = DebateConfig {
            decision_protocol: DecisionProtocol::Majority,
            ..DebateConfig::default()
        };
        let task = TaskInstruction::default_for(AnswerKind::FreeText);
        let sample = InputSample {
            id: "s".into(),
            question: "what color?".into(),
            context: None,
            reference_answers: vec!["blue".into()],
            choices: None,
        };
        let personas: Vec<Persona> =
            (0..3).map(|i| Persona::new(format!("P{i}"), "d")).collect();
        let (outcome, transcript) = run_debate(
            &config,
            &task,
            &sample,
            &backend,
            &TemplateSet::builtin(),
            &personas,
        )
        .await
        .unwrap();
        assert!(outcome.decided);
        assert_eq!(outcome.decision_turn, Some(1));
        assert!(!outcome.fallback_used);
        assert_eq!(outcome.final_answer, "The answer is blue");
        // proposer + one agreeing reply is enough for majority over three
        assert_eq!(transcript.len(), 2);
    }
}
