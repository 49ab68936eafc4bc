//! Run records, the append-only results file, and report aggregation.

use super::metrics::{mean, sample_std_dev};
use super::HarnessError;
use crate::decision::TurnRecord;
use crate::domain::{fnv1a, AnswerKind, DebateConfig, DecisionProtocol};
use crate::responders::ChallengeKind;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

/// Stable fingerprint of a run configuration; identical across a run set.
pub fn config_fingerprint(config: &DebateConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    format!("{:016x}", fnv1a(json.as_bytes()))
}

/// Challenge-ablation outcome attached to a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeRecord {
    pub scenario: ChallengeKind,
    pub challenged: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_answer: Option<String>,
    pub original_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improved: Option<bool>,
}

/// One sample's full debate result plus metrics; one line of the results
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sample_id: String,
    pub run_index: usize,
    pub config_label: String,
    pub config_fingerprint: String,
    pub answer_kind: AnswerKind,
    pub protocol: DecisionProtocol,
    pub final_answer: String,
    pub reference_answers: Vec<String>,
    pub unanswerable: bool,
    pub score: f64,
    pub decided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_turn: Option<u32>,
    pub fallback_used: bool,
    pub agent_answers: Vec<Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diversity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub challenge: Option<ChallengeRecord>,
    pub per_turn_records: Vec<TurnRecord>,
    pub backend_calls: u64,
    /// Wall-clock milliseconds; absent for scripted runs so results files
    /// stay byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    /// Set when the sample aborted on a backend failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Reads the valid record prefix of a results file. A trailing partial line
/// (crash during append) is truncated away so a resumed run continues from a
/// clean prefix.
pub fn read_existing_records(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut file = File::open(path)?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    let mut records = Vec::new();
    let mut valid_bytes = 0usize;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches('\n');
        if trimmed.is_empty() {
            valid_bytes += line.len();
            continue;
        }
        match serde_json::from_str::<RunRecord>(trimmed) {
            Ok(record) if line.ends_with('\n') => {
                records.push(record);
                valid_bytes += line.len();
            }
            _ => break,
        }
    }
    if valid_bytes < text.len() {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(valid_bytes as u64)?;
    }
    Ok(records)
}

/// Serialized appends with per-record flush; crash-safe for long runs.
pub struct ResultsWriter {
    writer: BufWriter<File>,
}

impl ResultsWriter {
    pub fn append_to(path: &Path) -> Result<Self, HarnessError> {
        let mut file = OpenOptions::new().create(true).write(true).open(path)?;
        file.seek(SeekFrom::End(0))?;
        Ok(Self { writer: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Mean/std cell for one slice of the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSplit {
    pub count: usize,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeStats {
    /// Fraction of agents that challenged the final solution.
    pub challenge_rate: f64,
    /// Of the samples with a revision, fraction that improved / worsened /
    /// kept the score.
    pub improved_rate: f64,
    pub worsened_rate: f64,
    pub unchanged_rate: f64,
    pub revised_samples: usize,
}

/// Aggregated results for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub label: String,
    pub config_fingerprint: String,
    pub protocol: DecisionProtocol,
    pub samples: usize,
    pub per_run_means: Vec<f64>,
    pub mean_score: f64,
    pub std_dev: f64,
    /// Decision turn -> record count; fallback records bucket at the turn
    /// the debate was cut off.
    pub termination_turns: BTreeMap<u32, usize>,
    pub undecided: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answerable: Option<CellSplit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unanswerable: Option<CellSplit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_diversity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub challenge: Option<ChallengeStats>,
    pub errors: usize,
}

/// The full report: one cell per configuration, mean and sample standard
/// deviation over exactly `num_runs` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub num_runs: usize,
    pub cells: Vec<ReportCell>,
}

fn fallback_turn(record: &RunRecord) -> Option<u32> {
    record
        .per_turn_records
        .iter()
        .map(|r| match r {
            TurnRecord::Consensus { turn, .. } => *turn,
            TurnRecord::Vote { turn, .. } => *turn,
            TurnRecord::Counting { turn, .. } => *turn,
        })
        .max()
}

/// Pure fold over the completed record set.
pub fn aggregate(records: &[RunRecord], num_runs: usize) -> Result<AggregateReport, HarnessError> {
    if num_runs == 0 {
        return Err(HarnessError::Aggregate("num_runs must be positive".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for record in records {
        if !groups.contains_key(&record.config_label) {
            order.push(record.config_label.clone());
        }
        groups.entry(record.config_label.clone()).or_default().push(record);
    }

    let mut cells = Vec::with_capacity(order.len());
    for label in order {
        let group = &groups[&label];
        // every run must cover the same sample set
        let mut per_run_samples: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        for record in group {
            if record.run_index >= num_runs {
                return Err(HarnessError::Aggregate(format!(
                    "record {} has run index {} outside 0..{num_runs}",
                    record.sample_id, record.run_index
                )));
            }
            per_run_samples
                .entry(record.run_index)
                .or_default()
                .insert(record.sample_id.as_str());
        }
        let first_samples = per_run_samples.values().next().cloned().unwrap_or_default();
        if per_run_samples.len() != num_runs
            || per_run_samples.values().any(|set| *set != first_samples)
        {
            return Err(HarnessError::Aggregate(format!(
                "cell {label:?} is missing a run for some sample"
            )));
        }

        let scored: Vec<&&RunRecord> = group.iter().filter(|r| r.error.is_none()).collect();
        let per_run_means: Vec<f64> = (0..num_runs)
            .map(|run| {
                let scores: Vec<f64> = scored
                    .iter()
                    .filter(|r| r.run_index == run)
                    .map(|r| r.score)
                    .collect();
                mean(&scores)
            })
            .collect();

        let mut termination_turns: BTreeMap<u32, usize> = BTreeMap::new();
        let mut undecided = 0usize;
        for record in &scored {
            match record.decision_turn.or_else(|| fallback_turn(record)) {
                Some(turn) => *termination_turns.entry(turn).or_insert(0) += 1,
                None => {}
            }
            if !record.decided {
                undecided += 1;
            }
        }

        let split = |unanswerable: bool| {
            let scores: Vec<f64> = scored
                .iter()
                .filter(|r| r.unanswerable == unanswerable)
                .map(|r| r.score)
                .collect();
            if scores.is_empty() {
                None
            } else {
                Some(CellSplit { count: scores.len(), mean_score: mean(&scores) })
            }
        };
        let is_extractive =
            group.first().map(|r| r.answer_kind == AnswerKind::ExtractiveOrUnknown).unwrap_or(false);
        let (answerable, unanswerable_split) =
            if is_extractive { (split(false), split(true)) } else { (None, None) };

        let diversities: Vec<f64> = scored.iter().filter_map(|r| r.diversity).collect();
        let mean_diversity =
            if diversities.is_empty() { None } else { Some(mean(&diversities)) };

        let challenge = {
            let challenged_records: Vec<&ChallengeRecord> =
                scored.iter().filter_map(|r| r.challenge.as_ref()).collect();
            if challenged_records.is_empty() {
                None
            } else {
                let total_flags: usize = challenged_records.iter().map(|c| c.challenged.len()).sum();
                let raised: usize = challenged_records
                    .iter()
                    .map(|c| c.challenged.iter().filter(|f| **f).count())
                    .sum();
                let revised: Vec<&&ChallengeRecord> = challenged_records
                    .iter()
                    .filter(|c| c.revised_score.is_some())
                    .collect();
                let count_sign = |cmp: std::cmp::Ordering| {
                    revised
                        .iter()
                        .filter(|c| {
                            c.revised_score
                                .unwrap()
                                .partial_cmp(&c.original_score)
                                .map(|o| o == cmp)
                                .unwrap_or(false)
                        })
                        .count()
                };
                let revised_samples = revised.len();
                let rate = |count: usize| {
                    if revised_samples == 0 { 0.0 } else { count as f64 / revised_samples as f64 }
                };
                Some(ChallengeStats {
                    challenge_rate: if total_flags == 0 { 0.0 } else { raised as f64 / total_flags as f64 },
                    improved_rate: rate(count_sign(std::cmp::Ordering::Greater)),
                    worsened_rate: rate(count_sign(std::cmp::Ordering::Less)),
                    unchanged_rate: rate(count_sign(std::cmp::Ordering::Equal)),
                    revised_samples,
                })
            }
        };

        cells.push(ReportCell {
            label,
            config_fingerprint: group[0].config_fingerprint.clone(),
            protocol: group[0].protocol,
            samples: first_samples.len(),
            mean_score: mean(&per_run_means),
            std_dev: sample_std_dev(&per_run_means),
            per_run_means,
            termination_turns,
            undecided,
            answerable,
            unanswerable: unanswerable_split,
            mean_diversity,
            challenge,
            errors: group.len() - scored.len(),
        });
    }
    Ok(AggregateReport { num_runs, cells })
}

/// `<output>.report.json` next to the results file.
pub fn report_path(output: &Path) -> PathBuf {
    let mut path = output.as_os_str().to_owned();
    path.push(".report.json");
    PathBuf::from(path)
}

pub fn write_report(output: &Path, report: &AggregateReport) -> Result<PathBuf, HarnessError> {
    let path = report_path(output);
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(&path, json)?;
    Ok(path)
}

/// Plot-ready CSV series: one row per cell (per-protocol bars or sweep
/// curves).
pub fn write_csv_series(output: &Path, report: &AggregateReport) -> Result<PathBuf, HarnessError> {
    let mut path = output.as_os_str().to_owned();
    path.push(".cells.csv");
    let path = PathBuf::from(path);
    let mut text = String::from("label,protocol,samples,mean_score,std_dev\n");
    for cell in &report.cells {
        text.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            cell.label,
            cell.protocol.name(),
            cell.samples,
            cell.mean_score,
            cell.std_dev
        ));
    }
    std::fs::write(&path, text)?;
    Ok(path)
}
