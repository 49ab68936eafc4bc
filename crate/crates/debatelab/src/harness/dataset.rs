//! Dataset ingestion and Cochran sampling.

use super::HarnessError;
use crate::domain::InputSample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Deserialize)]
struct DatasetEntry {
    id: String,
    question: String,
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    references: Vec<String>,
    #[serde(default)]
    choices: Option<Vec<String>>,
}

/// Loads a JSON array of `{id, question, context?, references, choices?}`.
/// Duplicate ids are rejected.
pub fn load_dataset(path: &Path) -> Result<Vec<InputSample>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Dataset(format!("reading {}: {e}", path.display())))?;
    let entries: Vec<DatasetEntry> = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Dataset(format!("parsing {}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    let mut samples = Vec::with_capacity(entries.len());
    for entry in entries {
        if !seen.insert(entry.id.clone()) {
            return Err(HarnessError::DuplicateSampleId(entry.id));
        }
        if entry.question.is_empty() {
            return Err(HarnessError::Dataset(format!("sample {:?} has an empty question", entry.id)));
        }
        samples.push(InputSample {
            id: entry.id,
            question: entry.question,
            context: entry.context,
            reference_answers: entry.references,
            choices: entry.choices,
        });
    }
    Ok(samples)
}

/// Cochran sample-size parameters: 95% confidence with a 5% margin of error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub z: f64,
    pub p: f64,
    pub d: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { z: 1.96, p: 0.5, d: 0.05 }
    }
}

impl SamplingParams {
    /// Infinite-population size n0 = Z^2 * p * (1-p) / d^2.
    pub fn infinite_population_size(&self) -> f64 {
        self.z * self.z * self.p * (1.0 - self.p) / (self.d * self.d)
    }
}

/// Finite-population-corrected sample size, ceiling-rounded:
/// n = ceil(n0 / (1 + (n0 - 1) / N)).
pub fn sample_size(population: usize, params: &SamplingParams) -> Result<usize, HarnessError> {
    if population == 0 {
        return Err(HarnessError::Sampling("population must be positive".into()));
    }
    let n0 = params.infinite_population_size();
    let n = n0 / (1.0 + (n0 - 1.0) / population as f64);
    Ok((n.ceil() as usize).clamp(1, population))
}

/// Uniform sample without replacement, deterministic for a given seed and
/// returned in original dataset order so paired protocol comparisons share
/// the exact subset.
pub fn draw_sample(
    dataset: &[InputSample],
    n: usize,
    seed: u64,
) -> Result<Vec<InputSample>, HarnessError> {
    if n > dataset.len() {
        return Err(HarnessError::Sampling(format!(
            "requested {n} samples from a dataset of {}",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, dataset.len(), n).into_vec();
    indices.sort_unstable();
    Ok(indices.into_iter().map(|i| dataset[i].clone()).collect())
}

/// Deterministic permutation of an already drawn subset.
pub fn shuffle_samples(samples: &mut [InputSample], seed: u64) {
    use rand::seq::SliceRandom;
    // separate stream from draw_sample so shuffling never undoes the draw
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    samples.shuffle(&mut rng);
}
