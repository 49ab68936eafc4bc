//! Scoring: exact-match accuracy, SQuAD-style token F1, answer diversity,
//! and basic run statistics.

use super::HarnessError;
use crate::backends::{cosine_similarity, Embedder};
use crate::domain::{canonical_answer, normalize_text, AnswerKind, InputSample, UNKNOWN_TOKEN};
use std::collections::HashMap;

/// 1.0 iff the canonical prediction matches any canonical reference. Samples
/// without references count as unanswerable and match the [UNKNOWN] token.
pub fn score_accuracy(final_answer: &str, sample: &InputSample, answer_kind: AnswerKind) -> f64 {
    let prediction = canonical_answer(final_answer, answer_kind);
    if sample.is_unanswerable() {
        return if prediction == UNKNOWN_TOKEN { 1.0 } else { 0.0 };
    }
    let matched = sample
        .reference_answers
        .iter()
        .any(|reference| canonical_answer(reference, answer_kind) == prediction);
    if matched {
        1.0
    } else {
        0.0
    }
}

/// Tokenization for F1: lowercase, strip punctuation, collapse whitespace,
/// drop English articles.
pub fn f1_tokens(text: &str) -> Vec<String> {
    normalize_text(text)
        .split_whitespace()
        .filter(|token| !matches!(*token, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

fn token_bag(tokens: &[String]) -> HashMap<&str, usize> {
    let mut bag = HashMap::new();
    for token in tokens {
        *bag.entry(token.as_str()).or_insert(0) += 1;
    }
    bag
}

fn bag_f1(prediction: &[String], reference: &[String]) -> f64 {
    if prediction.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if prediction.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let pred_bag = token_bag(prediction);
    let ref_bag = token_bag(reference);
    let common: usize = pred_bag
        .iter()
        .map(|(token, count)| count.min(ref_bag.get(token).unwrap_or(&0)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / prediction.len() as f64;
    let recall = common as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-level F1 against each reference, max over references. Unanswerable
/// samples score 1 iff the prediction canonicalizes to [UNKNOWN]; an
/// [UNKNOWN] prediction on an answerable sample scores 0.
pub fn score_squad_f1(final_answer: &str, sample: &InputSample) -> f64 {
    let canonical = canonical_answer(final_answer, AnswerKind::ExtractiveOrUnknown);
    if sample.is_unanswerable() {
        return if canonical == UNKNOWN_TOKEN { 1.0 } else { 0.0 };
    }
    if canonical == UNKNOWN_TOKEN {
        return 0.0;
    }
    let prediction = f1_tokens(final_answer);
    sample
        .reference_answers
        .iter()
        .map(|reference| bag_f1(&prediction, &f1_tokens(reference)))
        .fold(0.0, f64::max)
}

/// Per-sample score under the run's answer kind: token F1 for extractive
/// tasks, exact-match accuracy otherwise.
pub fn score_for_kind(final_answer: &str, sample: &InputSample, answer_kind: AnswerKind) -> f64 {
    match answer_kind {
        AnswerKind::ExtractiveOrUnknown => score_squad_f1(final_answer, sample),
        other => score_accuracy(final_answer, sample, other),
    }
}

/// Mean pairwise cosine similarity between the agents' final answers; lower
/// similarity means higher answer diversity.
pub async fn diversity_score(
    final_answers_per_agent: &[String],
    embedder: &dyn Embedder,
) -> Result<f64, HarnessError> {
    if final_answers_per_agent.len() < 2 {
        return Err(HarnessError::Metrics(format!(
            "diversity needs at least 2 answers, got {}",
            final_answers_per_agent.len()
        )));
    }
    let vectors = embedder
        .embed(final_answers_per_agent)
        .await
        .map_err(|e| HarnessError::Metrics(e.to_string()))?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            total += cosine_similarity(&vectors[i], &vectors[j]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with divisor n-1; 0 for fewer than two values.
pub fn sample_std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let variance =
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    variance.sqrt()
}
