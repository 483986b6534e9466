//! Sampling-stability harnesses: how similarity values move with subsample
//! size and under bootstrap resampling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::consistency::Summary;
use super::sets::{enumerate_pairs, ModelSet};
use super::similarity::{dataset_labels, similarity_vector, EmbeddingSource, SimilarityOptions};
use crate::error::{Error, Result};
use crate::math::Measure;
use crate::store::{bootstrap_indices, stratified_subsample};

/// Absolute change of each pair's similarity between two subsample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStep {
    pub k: usize,
    pub k_next: usize,
    pub abs_diffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub dataset_id: String,
    pub measure: Measure,
    pub seed: u64,
    pub classes: usize,
    pub pairs: Vec<(String, String)>,
    pub ks: Vec<usize>,
    /// `values[i][j]`: similarity of `pairs[j]` at `ks[i]` samples per class.
    pub values: Vec<Vec<f64>>,
    pub steps: Vec<ConvergenceStep>,
}

/// Similarity per pair at `k * C` stratified rows for each `k` in `per_class_ks`,
/// where `C` is the number of classes present in the dataset.
#[allow(clippy::too_many_arguments)]
pub fn subsample_convergence(
    source: &dyn EmbeddingSource,
    dataset: &str,
    models: &ModelSet,
    measure: Measure,
    per_class_ks: &[usize],
    seed: u64,
    opts: SimilarityOptions,
) -> Result<ConvergenceTable> {
    if per_class_ks.is_empty() || per_class_ks.windows(2).any(|w| w[0] >= w[1]) || per_class_ks[0] == 0 {
        return Err(Error::config(
            "per_class_ks",
            "must be a non-empty, strictly increasing list of positive integers",
        ));
    }
    let pairs = enumerate_pairs(models, models)?;
    let labels = dataset_labels(source, dataset, &models.members)?.ok_or_else(|| {
        Error::InvalidInput(format!("dataset `{dataset}` has no labels for stratified sampling"))
    })?;
    let n = labels.len();
    let classes = labels.present_classes();
    for &k in per_class_ks {
        if k * classes > n {
            return Err(Error::KTooLarge { k, classes, n });
        }
    }
    let values = per_class_ks
        .iter()
        .map(|&k| {
            let sampling = stratified_subsample(&labels.labels, k * classes, seed)?;
            Ok(similarity_vector(source, dataset, models, models, measure, &sampling, opts)?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = per_class_ks
        .windows(2)
        .zip(values.windows(2))
        .map(|(k, v)| ConvergenceStep {
            k: k[0],
            k_next: k[1],
            abs_diffs: v[0].iter().zip(&v[1]).map(|(a, b)| (a - b).abs()).collect(),
        })
        .collect();
    Ok(ConvergenceTable {
        dataset_id: dataset.to_string(),
        measure,
        seed,
        classes,
        pairs,
        ks: per_class_ks.to_vec(),
        values,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub pair: (String, String),
    /// One value per bootstrap iteration.
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub dataset_id: String,
    pub measure: Measure,
    pub seed: u64,
    pub iterations: usize,
    pub size: usize,
    pub pairs: Vec<PairStats>,
}

/// Iteration `i` resamples `size` rows with replacement using seed `seed ^ i`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_stability(
    source: &dyn EmbeddingSource,
    dataset: &str,
    models: &ModelSet,
    measure: Measure,
    iterations: usize,
    size: usize,
    seed: u64,
    opts: SimilarityOptions,
) -> Result<BootstrapReport> {
    if iterations == 0 {
        return Err(Error::config("iterations", "must be positive"));
    }
    let pairs = enumerate_pairs(models, models)?;
    let n = source.embedding(dataset, &models.members[0])?.matrix.n();
    if size == 0 || size > n {
        return Err(Error::InvalidInput(format!(
            "bootstrap size {size} must be in [1, {n}]"
        )));
    }
    let runs = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let sampling = bootstrap_indices(n, size, seed ^ i as u64)?;
            Ok(similarity_vector(source, dataset, models, models, measure, &sampling, opts)?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = pairs
        .into_iter()
        .enumerate()
        .map(|(j, pair)| {
            let values: Vec<f64> = runs.iter().map(|r| r[j]).collect();
            let s = Summary::of(&values)?;
            Ok(PairStats {
                pair,
                values,
                mean: s.mean,
                std: s.std,
                min: s.min,
                max: s.max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapReport {
        dataset_id: dataset.to_string(),
        measure,
        seed,
        iterations,
        size,
        pairs: stats,
    })
}
