//! Run orchestration across protocols, datasets and runs: sampling, metrics,
//! persistence, aggregation and report emission.

pub mod dataset;
pub mod metrics;
pub mod records;

pub use dataset::{draw_sample, load_dataset, sample_size, shuffle_samples, SamplingParams};
pub use metrics::{diversity_score, f1_tokens, score_accuracy, score_for_kind, score_squad_f1};
pub use records::{
    aggregate, config_fingerprint, read_existing_records, write_csv_series, write_report,
    AggregateReport, ChallengeRecord, ChallengeStats, ReportCell, ResultsWriter, RunRecord,
};

use crate::backends::{
    generate_personas, CompletionBackend, CountVectorEmbedder, CountingBackend, Embedder,
    HttpBackend, HttpEmbedder, ScriptedBackend, ScriptedBehavior,
};
use crate::domain::{
    derive_rng_key, validate_config, AnswerKind, ConfigError, DebateConfig, InputSample, Persona,
    TaskInstruction,
};
use crate::orchestration::{
    collect_agent_answers, run_challenge, run_debate, schedule_scaling_sweep, OrchestrationError,
    SweepKind,
};
use crate::responders::{ChallengeKind, ChallengeScenario, TemplateSet};
use futures::StreamExt;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateSampleId(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("aggregate: {0}")]
    Aggregate(String),
    #[error("output file does not match this experiment: {0}")]
    ResumeMismatch(String),
    #[error(transparent)]
    Backend(#[from] crate::backends::BackendError),
    #[error(transparent)]
    Orchestration(#[from] OrchestrationError),
    #[error("challenge: {0}")]
    Challenge(String),
}

/// Which completion provider a run uses.
#[derive(Debug, Clone)]
pub enum BackendChoice {
    /// Deterministic scripted agents from a behavior file.
    Scripted { behavior: PathBuf },
    /// Chat-completion endpoint (Appendix-style `endpoint_url` + `model_name`).
    Http { endpoint_url: String, model_name: String },
}

/// Challenge-ablation request. The wrong-solution scenario needs an injected
/// answer (literal or per-sample file); the irrelevant scenario falls back to
/// a fixed pool of off-topic sentences.
#[derive(Debug, Clone)]
pub struct ChallengeSpec {
    pub kind: ChallengeKind,
    pub injected_solution: Option<String>,
    pub injected_file: Option<PathBuf>,
    pub context_file: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub config: DebateConfig,
    pub answer_kind: AnswerKind,
    pub task_instruction: Option<String>,
    pub num_samples: Option<usize>,
    pub shuffle_input_samples: bool,
    pub sweep: Option<SweepKind>,
    pub backend: BackendChoice,
    pub challenge: Option<ChallengeSpec>,
    pub answer_diversity: bool,
    pub embedding_endpoint: Option<String>,
    pub embedding_model: Option<String>,
    pub templates_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub total_records: usize,
    pub new_records: usize,
    pub report: AggregateReport,
    pub report_path: PathBuf,
    pub csv_path: PathBuf,
}

const IRRELEVANT_POOL: &str = include_str!("../../data/irrelevant_solutions.txt");

#[derive(Debug, Clone, Copy)]
struct JobSpec {
    config_index: usize,
    run_index: usize,
    sample_index: usize,
}

struct ExperimentCtx<'a> {
    args: &'a ExperimentArgs,
    task: TaskInstruction,
    templates: TemplateSet,
    configs: Vec<(String, DebateConfig)>,
    samples: Vec<InputSample>,
    backend: Arc<dyn CompletionBackend>,
    embedder: Arc<dyn Embedder>,
    injected_map: BTreeMap<String, String>,
    context_map: BTreeMap<String, String>,
    record_wall_clock: bool,
}

impl ExperimentCtx<'_> {
    fn scenario_for(
        &self,
        sample: &InputSample,
        config: &DebateConfig,
        run_index: usize,
    ) -> Result<Option<ChallengeScenario>, String> {
        let Some(spec) = &self.args.challenge else { return Ok(None) };
        let lookup = |map: &BTreeMap<String, String>, literal: &Option<String>| {
            literal.clone().or_else(|| map.get(&sample.id).cloned())
        };
        let mut scenario = ChallengeScenario::new(spec.kind);
        match spec.kind {
            ChallengeKind::IrrelevantSolution => {
                let injected = lookup(&self.injected_map, &spec.injected_solution)
                    .unwrap_or_else(|| {
                        let pool: Vec<&str> =
                            IRRELEVANT_POOL.lines().filter(|l| !l.is_empty()).collect();
                        let key = derive_rng_key(config.seed, &sample.id, run_index);
                        pool[(key % pool.len() as u64) as usize].to_string()
                    });
                scenario.injected_solution = Some(injected);
            }
            ChallengeKind::WrongSolution => {
                scenario.injected_solution =
                    Some(lookup(&self.injected_map, &spec.injected_solution).ok_or_else(|| {
                        format!("no injected wrong solution for sample {:?}", sample.id)
                    })?);
            }
            ChallengeKind::WithExtraContext => {
                scenario.extra_context = self
                    .context_map
                    .get(&sample.id)
                    .cloned()
                    .or_else(|| sample.context.clone());
            }
            ChallengeKind::SolutionOnly | ChallengeKind::WithHistory => {}
        }
        Ok(Some(scenario))
    }

    async fn run_one(&self, job: JobSpec) -> RunRecord {
        let (label, config) = &self.configs[job.config_index];
        let sample = &self.samples[job.sample_index];
        let counting = CountingBackend::new(self.backend.as_ref());
        let start = Instant::now();
        let mut record = RunRecord {
            sample_id: sample.id.clone(),
            run_index: job.run_index,
            config_label: label.clone(),
            config_fingerprint: config_fingerprint(config),
            answer_kind: self.task.answer_kind,
            protocol: config.decision_protocol,
            final_answer: String::new(),
            reference_answers: sample.reference_answers.clone(),
            unanswerable: sample.is_unanswerable(),
            score: 0.0,
            decided: false,
            decision_turn: None,
            fallback_used: false,
            agent_answers: Vec::new(),
            diversity: None,
            challenge: None,
            per_turn_records: Vec::new(),
            backend_calls: 0,
            duration_ms: None,
            error: None,
        };

        let outcome: Result<(), String> = async {
            let expert_count = config.num_agents - config.num_neutral_agents;
            let mut personas =
                generate_personas(&self.task, expert_count, &counting, &self.templates)
                    .await
                    .map_err(|e| e.to_string())?;
            for k in 0..config.num_neutral_agents {
               personas.push(Persona::neutral(k + 1));
            }
            let (debate, mut transcript) = run_debate(
                config,
                &self.task,
                sample,
                &counting,
                &self.templates,
                &personas,
            )
            .await
            .map_err(|e| e.to_string())?;

            record.final_answer = debate.final_answer.clone();
            record.decided = debate.decided;
            record.decision_turn = debate.decision_turn;
            record.fallback_used = debate.fallback_used;
            record.per_turn_records = debate.per_turn_records.clone();
            record.score = score_for_kind(&debate.final_answer, sample, self.task.answer_kind);

            if let Some(scenario) = self.scenario_for(sample, config, job.run_index)? {
                let challenge = run_challenge(
                    config,
                    &self.task,
                    sample,
                    &debate.final_answer,
                    &transcript,
                    &scenario,
                    &counting,
                    &self.templates,
                    &personas,
                )
                .await
                .map_err(|e| e.to_string())?;
                let original_score = record.score;
                let revised_score = challenge
                    .revised_answer
                    .as_deref()
                    .map(|answer| score_for_kind(answer, sample, self.task.answer_kind));
                if let Some(revised) = revised_score {
                    // the first revised answer replaces the final answer for scoring
                    record.score = revised;
                }
                record.challenge = Some(ChallengeRecord {
                    scenario: scenario.kind,
                    challenged: challenge.challenged,
                    revised_answer: challenge.revised_answer,
                    original_score,
                    revised_score,
                    improved: revised_score.map(|revised| revised > original_score),
                });
            }

            if self.args.answer_diversity && config.num_agents >= 2 {
                let answers = collect_agent_answers(
                    config,
                    &self.task,
                    sample,
                    &counting,
                    &self.templates,
                    &personas,
                    &mut transcript,
                )
                .await
                .map_err(|e| e.to_string())?;
                record.diversity = Some(
                    diversity_score(&answers, self.embedder.as_ref())
                        .await
                        .map_err(|e| e.to_string())?,
                );
            }

            record.agent_answers = (0..config.num_agents)
                .map(|index| {
                    transcript
                        .last_message_of(index)
                        .and_then(|i| transcript.messages()[i].extracted_solution.clone())
                })
                .collect();
            Ok(())
        }
        .await;

        if let Err(error) = outcome {
            record.error = Some(error);
        }
        record.backend_calls = counting.calls();
        if self.record_wall_clock {
            record.duration_ms = Some(start.elapsed().as_millis() as u64);
        }
        record
    }
}

fn load_string_map(path: &Option<PathBuf>) -> Result<BTreeMap<String, String>, HarnessError> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn sweep_label(kind: SweepKind, config: &DebateConfig) -> String {
    match kind {
        SweepKind::Rounds => format!("rounds={}", config.voting_starts_after_turn),
        SweepKind::Agents => format!("agents={}", config.num_agents),
    }
}

/// Evaluation subset size: an explicit per-dataset override (how the paper's
/// exact MMLU/MMLU-Pro/GPQA counts are reproduced) or the Cochran formula.
pub fn resolve_sample_count(
    dataset_len: usize,
    explicit: Option<usize>,
) -> Result<usize, HarnessError> {
    match explicit {
        Some(n) if n == 0 => Err(HarnessError::Sampling("num_samples must be positive".into())),
        Some(n) if n > dataset_len => Err(HarnessError::Sampling(format!(
            "num_samples {n} exceeds the dataset size {dataset_len}"
        ))),
        Some(n) => Ok(n),
        None => sample_size(dataset_len, &SamplingParams::default()),
    }
}

/// Loads the dataset, draws the evaluation subset, runs every
/// (config, run, sample) debate with bounded concurrency, persists records
/// incrementally in a deterministic order, and emits the aggregate report
/// plus plot-ready CSV series. Resumable: existing records are kept and only
/// the remaining jobs run.
pub async fn run_experiment(args: &ExperimentArgs) -> Result<ExperimentSummary, HarnessError> {
    let config = validate_config(args.config.clone())?;
    let templates = match &args.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir).map_err(OrchestrationError::Prompt)?,
        None => TemplateSet::builtin(),
    };
    let task = match &args.task_instruction {
        Some(text) => TaskInstruction::new(text.clone(), args.answer_kind),
        None => TaskInstruction::default_for(args.answer_kind),
    };
    if let Some(challenge) = &args.challenge {
        if challenge.kind == ChallengeKind::WrongSolution
            && challenge.injected_solution.is_none()
            && challenge.injected_file.is_none()
        {
            return Err(HarnessError::Challenge(
                "wrong_solution needs --challenge-injected-solution or --challenge-injected-file"
                    .into(),
            ));
        }
    }

    let dataset = load_dataset(&args.input)?;
    let n = resolve_sample_count(dataset.len(), args.num_samples)?;
    let mut samples = draw_sample(&dataset, n, config.seed)?;
    if args.shuffle_input_samples {
        shuffle_samples(&mut samples, config.seed);
    }

    let configs: Vec<(String, DebateConfig)> = match args.sweep {
        None => vec![(config.decision_protocol.name().to_string(), config.clone())],
        Some(kind) => schedule_scaling_sweep(kind, &config)?
            .into_iter()
            .map(|c| (sweep_label(kind, &c), c))
            .collect(),
    };

    let backend: Arc<dyn CompletionBackend> = match &args.backend {
        BackendChoice::Scripted { behavior } => Arc::new(ScriptedBackend::new(
            ScriptedBehavior::from_json_file(behavior)?,
            config.seed,
        )),
        BackendChoice::Http { endpoint_url, model_name } => {
            Arc::new(HttpBackend::new(endpoint_url, model_name, config.concurrent_requests))
        }
    };
    let embedder: Arc<dyn Embedder> = match &args.embedding_endpoint {
        Some(endpoint) => Arc::new(HttpEmbedder::new(
            endpoint,
            args.embedding_model.as_deref().unwrap_or("sentence-embedder"),
        )),
        None => Arc::new(CountVectorEmbedder::default()),
    };

    let mut jobs = Vec::new();
    for config_index in 0..configs.len() {
        for run_index in 0..config.num_runs {
            for sample_index in 0..samples.len() {
                jobs.push(JobSpec { config_index, run_index, sample_index });
            }
        }
    }

    let existing = read_existing_records(&args.output)?;
    if existing.len() > jobs.len() {
        return Err(HarnessError::ResumeMismatch(format!(
            "{} existing records for {} jobs",
            existing.len(),
            jobs.len()
        )));
    }
    for (record, job) in existing.iter().zip(&jobs) {
        let (label, _) = &configs[job.config_index];
        if record.config_label != *label
            || record.run_index != job.run_index
            || record.sample_id != samples[job.sample_index].id
        {
            return Err(HarnessError::ResumeMismatch(format!(
                "record ({}, run {}, {}) does not match job ({}, run {}, {})",
                record.config_label,
                record.run_index,
                record.sample_id,
                label,
                job.run_index,
                samples[job.sample_index].id
            )));
        }
    }

    let ctx = ExperimentCtx {
        args,
        task,
        templates,
        configs,
        samples,
        backend,
        embedder,
        injected_map: load_string_map(&args.challenge.as_ref().and_then(|c| c.injected_file.clone()))?,
        context_map: load_string_map(&args.challenge.as_ref().and_then(|c| c.context_file.clone()))?,
        record_wall_clock: matches!(args.backend, BackendChoice::Http { .. }),
    };

    let pending = &jobs[existing.len()..];
    let mut writer = ResultsWriter::append_to(&args.output)?;
    let mut stream = futures::stream::iter(pending.iter().copied())
        .map(|job| ctx.run_one(job))
        .buffered(config.concurrent_requests.max(1));
    let mut new_records = 0usize;
    while let Some(record) = stream.next().await {
        writer.write(&record)?;
        new_records += 1;
    }
    drop(stream);
    drop(writer);

    // aggregation is a pure fold over the completed file
    let all_records = read_existing_records(&args.output)?;
    let report = aggregate(&all_records, config.num_runs)?;
    let report_path = write_report(&args.output, &report)?;
    let csv_path = write_csv_series(&args.output, &report)?;
    Ok(ExperimentSummary {
        total_records: all_records.len(),
        new_records,
        report,
        report_path,
        csv_path,
    })
}
