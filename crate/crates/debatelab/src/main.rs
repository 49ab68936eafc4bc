use clap::{Parser, ValueEnum};
use debatelab::harness::{
    run_experiment, BackendChoice, ChallengeSpec, ExperimentArgs, HarnessError,
};
use debatelab::orchestration::SweepKind;
use debatelab::responders::ChallengeKind;
use debatelab::{AnswerKind, DebateConfig, DecisionProtocol, DiscussionParadigm, ResponseGenerator};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Majority,
    Supermajority,
    Unanimity,
    SimpleVoting,
    RankedVoting,
    ApprovalVoting,
    CumulativeVoting,
    SolutionCounting,
}

impl From<ProtocolArg> for DecisionProtocol {
    fn from(value: ProtocolArg) -> Self {
        match value {
            ProtocolArg::Majority => Self::Majority,
            ProtocolArg::Supermajority => Self::Supermajority,
            ProtocolArg::Unanimity => Self::Unanimity,
            ProtocolArg::SimpleVoting => Self::SimpleVoting,
            ProtocolArg::RankedVoting => Self::RankedVoting,
            ProtocolArg::ApprovalVoting => Self::ApprovalVoting,
            ProtocolArg::CumulativeVoting => Self::CumulativeVoting,
            ProtocolArg::SolutionCounting => Self::SolutionCounting,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParadigmArg {
    Memory,
    Relay,
    Report,
    Debate,
    CollectiveRefinement,
}

impl From<ParadigmArg> for DiscussionParadigm {
    fn from(value: ParadigmArg) -> Self {
        match value {
            ParadigmArg::Memory => Self::Memory,
            ParadigmArg::Relay => Self::Relay,
            ParadigmArg::Report => Self::Report,
            ParadigmArg::Debate => Self::Debate,
            ParadigmArg::CollectiveRefinement => Self::CollectiveRefinement,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Freetext,
    Simple,
    Critical,
    Reasoning,
}

impl From<GeneratorArg> for ResponseGenerator {
    fn from(value: GeneratorArg) -> Self {
        match value {
            GeneratorArg::Freetext => Self::Freetext,
            GeneratorArg::Simple => Self::Simple,
            GeneratorArg::Critical => Self::Critical,
            GeneratorArg::Reasoning => Self::Reasoning,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnswerKindArg {
    MultipleChoice,
    Boolean,
    ExtractiveOrUnknown,
    FreeText,
}

impl From<AnswerKindArg> for AnswerKind {
    fn from(value: AnswerKindArg) -> Self {
        match value {
            AnswerKindArg::MultipleChoice => Self::MultipleChoice,
            AnswerKindArg::Boolean => Self::Boolean,
            AnswerKindArg::ExtractiveOrUnknown => Self::ExtractiveOrUnknown,
            AnswerKindArg::FreeText => Self::FreeText,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    Rounds,
    Agents,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChallengeArg {
    SolutionOnly,
    WithHistory,
    WithExtraContext,
    IrrelevantSolution,
    WrongSolution,
}

impl From<ChallengeArg> for ChallengeKind {
    fn from(value: ChallengeArg) -> Self {
        match value {
            ChallengeArg::SolutionOnly => Self::SolutionOnly,
            ChallengeArg::WithHistory => Self::WithHistory,
            ChallengeArg::WithExtraContext => Self::WithExtraContext,
            ChallengeArg::IrrelevantSolution => Self::IrrelevantSolution,
            ChallengeArg::WrongSolution => Self::WrongSolution,
        }
    }
}

/// Multi-agent debate runner and evaluation harness.
#[derive(Debug, Parser)]
#[command(name = "debatelab", version, about)]
struct Cli {
    /// Input dataset: JSON array of {id, question, context?, references, choices?}.
    #[arg(long)]
    input: PathBuf,
    /// Results file (line-delimited JSON, append-only, resumable).
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "simple-voting")]
    decision_protocol: ProtocolArg,
    #[arg(long, value_enum, default_value = "memory")]
    discussion_paradigm: ParadigmArg,
    #[arg(long, value_enum, default_value = "simple")]
    response_generator: GeneratorArg,
    #[arg(long, default_value_t = 3)]
    num_agents: usize,
    #[arg(long, default_value_t = 0)]
    num_neutral_agents: usize,
    #[arg(long, default_value_t = 10)]
    max_turns: u32,
    /// Discussion turns before the first vote.
    #[arg(long, default_value_t = 3)]
    voting_starts_after_turn: u32,
    #[arg(long, default_value_t = 2)]
    visible_turns_in_memory: u32,
    /// Inner panel rounds per turn of the debate paradigm.
    #[arg(long, default_value_t = 2)]
    debate_rounds: u32,
    #[arg(long, default_value_t = 10)]
    cumulative_point_budget: u32,
    #[arg(long, default_value_t = 3)]
    num_runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    concurrent_requests: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Chat-completion endpoint; credential read from DEBATELAB_API_KEY.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    endpoint_url: String,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    model_name: String,
    /// Scripted behavior file (JSON); replaces the HTTP backend.
    #[arg(long)]
    scripted_behavior: Option<PathBuf>,
    /// Single-agent baseline (sets num-agents to 1).
    #[arg(long, default_value_t = false)]
    use_baseline: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    use_chain_of_thought: bool,
    /// AAD: every agent drafts its first answer without seeing peers.
    #[arg(long, default_value_t = false)]
    all_agents_draft_first: bool,
    #[arg(long, value_enum)]
    challenge_scenario: Option<ChallengeArg>,
    /// Injected answer for the wrong/irrelevant challenge scenarios.
    #[arg(long)]
    challenge_injected_solution: Option<String>,
    /// JSON map {sample id -> injected answer}.
    #[arg(long)]
    challenge_injected_file: Option<PathBuf>,
    /// JSON map {sample id -> extra context} for the extra-context scenario.
    #[arg(long)]
    challenge_context_file: Option<PathBuf>,
    /// Scaling sweep: ten configs varying rounds or agents.
    #[arg(long, value_enum)]
    sweep: Option<SweepArg>,
    /// Explicit evaluation sample count (overrides the Cochran formula).
    #[arg(long)]
    num_samples: Option<usize>,
    #[arg(long, default_value_t = false)]
    shuffle_input_samples: bool,
    #[arg(long, value_enum, default_value = "extractive-or-unknown")]
    answer_kind: AnswerKindArg,
    /// Task instruction presented on every turn (defaults per answer kind).
    #[arg(long)]
    task_instruction: Option<String>,
    /// Compute the answer-diversity metric per sample.
    #[arg(long, default_value_t = false)]
    answer_diversity: bool,
    /// Embedding endpoint for diversity; defaults to the offline fallback.
    #[arg(long)]
    embedding_endpoint: Option<String>,
    #[arg(long)]
    embedding_model: Option<String>,
    /// Directory of template overrides (<name>.txt).
    #[arg(long)]
    templates_dir: Option<PathBuf>,
}

impl Cli {
    fn into_args(self) -> ExperimentArgs {
        let num_agents = if self.use_baseline { 1 } else { self.num_agents };
        let sweep = self.sweep.map(|s| match s {
            SweepArg::Rounds => SweepKind::Rounds,
            SweepArg::Agents => SweepKind::Agents,
        });
        // the rounds sweep reaches 10 pre-vote rounds and needs turn headroom
        let max_turns = if matches!(sweep, Some(SweepKind::Rounds)) {
            self.max_turns.max(11)
        } else {
            self.max_turns
        };
        let config = DebateConfig {
            num_agents,
            num_neutral_agents: self.num_neutral_agents,
            max_turns,
            voting_starts_after_turn: self.voting_starts_after_turn,
            visible_turns_in_memory: self.visible_turns_in_memory,
            decision_protocol: self.decision_protocol.into(),
            discussion_paradigm: self.discussion_paradigm.into(),
            response_generator: self.response_generator.into(),
            debate_rounds: self.debate_rounds,
            all_agents_draft_first: self.all_agents_draft_first,
            cumulative_point_budget: self.cumulative_point_budget,
            use_chain_of_thought: self.use_chain_of_thought,
            concurrent_requests: self.concurrent_requests,
            seed: self.seed,
            num_runs: self.num_runs,
            temperature: self.temperature,
        };
        let backend = match self.scripted_behavior {
            Some(behavior) => BackendChoice::Scripted { behavior },
            None => BackendChoice::Http {
                endpoint_url: self.endpoint_url,
                model_name: self.model_name,
            },
        };
        let challenge = self.challenge_scenario.map(|kind| ChallengeSpec {
            kind: kind.into(),
            injected_solution: self.challenge_injected_solution,
            injected_file: self.challenge_injected_file,
            context_file: self.challenge_context_file,
        });
        ExperimentArgs {
            input: self.input,
            output: self.output,
            config,
            answer_kind: self.answer_kind.into(),
            task_instruction: self.task_instruction,
            num_samples: self.num_samples,
            shuffle_input_samples: self.shuffle_input_samples,
            sweep,
            backend,
            challenge,
            answer_diversity: self.answer_diversity,
            embedding_endpoint: self.embedding_endpoint,
            embedding_model: self.embedding_model,
            templates_dir: self.templates_dir,
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.into_args();
    match run_experiment(&args).await {
        Ok(summary) => {
            println!(
                "{} records ({} new) -> {}",
                summary.total_records,
                summary.new_records,
                args.output.display()
            );
            for cell in &summary.report.cells {
                println!(
                    "  {}: mean {:.4} +/- {:.4} over {} samples x {} runs",
                    cell.label,
                    cell.mean_score,
                    cell.std_dev,
                    cell.samples,
                    summary.report.num_runs
                );
            }
            println!("report: {}", summary.report_path.display());
            println!("series: {}", summary.csv_path.display());
            ExitCode::SUCCESS
        }
        Err(error) => {
            let record = json!({
                "error": error.to_string(),
                "kind": error_kind(&error),
            });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}

fn error_kind(error: &HarnessError) -> &'static str {
    match error {
        HarnessError::Dataset(_) | HarnessError::DuplicateSampleId(_) => "dataset",
        HarnessError::Config(_) => "config",
        HarnessError::Io(_) => "io",
        HarnessError::Json(_) => "json",
        HarnessError::Sampling(_) => "sampling",
        HarnessError::Metrics(_) => "metrics",
        HarnessError::Aggregate(_) => "aggregate",
        HarnessError::ResumeMismatch(_) => "resume",
        HarnessError::Backend(_) => "backend",
        HarnessError::Orchestration(_) => "orchestration",
        HarnessError::Challenge(_) => "challenge",
    }
}
