use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::similarity::SimilarityVector;
use crate::error::{Error, Result};
use crate::math::corr::Centered;
use crate::math::{sum, Measure};

/// Box-plot style summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile with linear interpolation between order statistics of `sorted`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("cannot summarize an empty sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sum::mean(samples);
        let var = sum::sum(samples.iter().map(|x| (x - mean) * (x - mean))) / samples.len() as f64;
        Ok(Self {
            count: samples.len(),
            median: quantile_sorted(&sorted, 0.5),
            q1: quantile_sorted(&sorted, 0.25),
            q3: quantile_sorted(&sorted, 0.75),
            mean,
            std: var.sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

fn check_compatible(a: &SimilarityVector, b: &SimilarityVector) -> Result<()> {
    if a.pairs != b.pairs || a.measure != b.measure {
        return Err(Error::PairListMismatch);
    }
    Ok(())
}

/// Pearson correlation between two datasets' similarity vectors.
pub fn consistency(a: &SimilarityVector, b: &SimilarityVector) -> Result<f64> {
    check_compatible(a, b)?;
    let ca = Centered::new(&a.values).map_err(|e| e.for_model("*", &a.dataset_id))?;
    let cb = Centered::new(&b.values).map_err(|e| e.for_model("*", &b.dataset_id))?;
    ca.correlate(&cb)
}

/// Pearson correlations for every dataset pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyMatrix {
    pub datasets: Vec<String>,
    pub rho: Array2<f64>,
    pub theta_set: String,
    pub phi_set: String,
    pub measure: Measure,
}

/// `vectors` holds one similarity vector per dataset, all over the same pair
/// list; dataset order is kept.
pub fn consistency_matrix(vectors: &[SimilarityVector]) -> Result<ConsistencyMatrix> {
    if vectors.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "consistency needs at least 2 datasets, got {}",
            vectors.len()
        )));
    }
    let first = &vectors[0];
    for v in &vectors[1..] {
        check_compatible(first, v)?;
        if v.theta_set != first.theta_set || v.phi_set != first.phi_set {
            return Err(Error::PairListMismatch);
        }
    }
    let centered = vectors
        .iter()
        .map(|v| Centered::new(&v.values).map_err(|e| e.for_model("*", &v.dataset_id)))
        .collect::<Result<Vec<_>>>()?;
    let d = vectors.len();
    let upper: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .collect();
    let values = upper
        .par_iter()
        .map(|&(i, j)| centered[i].correlate(&centered[j]))
        .collect::<Result<Vec<_>>>()?;
    let mut rho = Array2::from_elem((d, d), 1.0);
    for (&(i, j), v) in upper.iter().zip(values) {
        rho[[i, j]] = v;
        rho[[j, i]] = v;
    }
    Ok(ConsistencyMatrix {
        datasets: vectors.iter().map(|v| v.dataset_id.clone()).collect(),
        rho,
        theta_set: first.theta_set.clone(),
        phi_set: first.phi_set.clone(),
        measure: first.measure,
    })
}

/// The correlations over all unordered dataset pairs for one model-set pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyDistribution {
    pub theta_set: String,
    pub phi_set: String,
    pub measure: Measure,
    pub dataset_pairs: Vec<(String, String)>,
    pub samples: Vec<f64>,
    pub summary: Summary,
}

/// Strict upper triangle of `m`, row-major, with its summary.
pub fn consistency_distribution(m: &ConsistencyMatrix) -> Result<ConsistencyDistribution> {
    let d = m.datasets.len();
    let mut dataset_pairs = Vec::new();
    let mut samples = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            dataset_pairs.push((m.datasets[i].clone(), m.datasets[j].clone()));
            samples.push(m.rho[[i, j]]);
        }
    }
    let summary = Summary::of(&samples)?;
    Ok(ConsistencyDistribution {
        theta_set: m.theta_set.clone(),
        phi_set: m.phi_set.clone(),
        measure: m.measure,
        dataset_pairs,
        samples,
        summary,
    })
}
