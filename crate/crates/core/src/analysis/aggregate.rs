use ndarray::Array2;

use super::similarity::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::math::sum::NeumaierSum;
use crate::math::Measure;

/// Entrywise mean and population standard deviation over datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSimilarity {
    pub models: Vec<String>,
    pub measure: Measure,
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    pub per_dataset_count: usize,
}

impl AggregateSimilarity {
    /// Entries `(i, j, excess)` where `std > sqrt(mean (1 - mean)) + tol`.
    ///
    /// For values confined to `[0, 1]` this bound always holds, so any hit
    /// means an input escaped the unit interval.
    pub fn std_bound_violations(&self, tol: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for ((i, j), &s) in self.std.indexed_iter() {
            let mu = self.mean[[i, j]];
            let bound = (mu * (1.0 - mu)).max(0.0).sqrt();
            if s > bound + tol {
                out.push((i, j, s - bound));
            }
        }
        out
    }
}

pub fn aggregate_mean_std(matrices: &[SimilarityMatrix]) -> Result<AggregateSimilarity> {
    if matrices.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "aggregation needs at least 2 datasets, got {}",
            matrices.len()
        )));
    }
    let first = &matrices[0];
    if matrices
        .iter()
        .any(|m| m.models != first.models || m.measure != first.measure)
    {
        return Err(Error::OrderMismatch);
    }
    let m = first.models.len();
    let d = matrices.len() as f64;
    let mut mean = Array2::zeros((m, m));
    let mut std = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let mut acc = NeumaierSum::new();
            acc.extend(matrices.iter().map(|x| x.values[[i, j]]));
            let mu = acc.value() / d;
            let mut sq = NeumaierSum::new();
            sq.extend(matrices.iter().map(|x| (x.values[[i, j]] - mu).powi(2)));
            mean[[i, j]] = mu;
            std[[i, j]] = (sq.value() / d).sqrt();
        }
    }
    Ok(AggregateSimilarity {
        models: first.models.clone(),
        measure: first.measure,
        mean,
        std,
        per_dataset_count: matrices.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sm(values: Array2<f64>, models: &[&str]) -> SimilarityMatrix {
        SimilarityMatrix {
            dataset_id: "d".into(),
            measure: Measure::CkaLinear,
            models: models.iter().map(|s| s.to_string()).collect(),
            values,
        }
    }

    #[test]
    fn hand_values() {
        let a = sm(array![[1.0, 0.2], [0.2, 1.0]], &["a", "b"]);
        let b = sm(array![[1.0, 0.4], [0.4, 1.0]], &["a", "b"]);
        let agg = aggregate_mean_std(&[a.clone(), b]).unwrap();
        assert!((agg.mean[[0, 1]] - 0.3).abs() < 1e-15);
        assert!((agg.std[[0, 1]] - 0.1).abs() < 1e-15);
        assert_eq!((agg.mean[[0, 0]], agg.std[[0, 0]]), (1.0, 0.0));
        assert!(agg.std_bound_violations(1e-9).is_empty());
        let same = aggregate_mean_std(&[a.clone(), a]).unwrap();
        assert!(same.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn order_and_count_checked() {
        let a = sm(array![[1.0, 0.2], [0.2, 1.0]], &["a", "b"]);
        let b = sm(array![[1.0, 0.2], [0.2, 1.0]], &["b", "a"]);
        assert!(matches!(aggregate_mean_std(&[a.clone(), b]), Err(Error::OrderMismatch)));
        assert!(aggregate_mean_std(&[a]).is_err());
    }

    #[test]
    fn bound_flags_out_of_range_values() {
        let a = sm(array![[1.0, -1.0], [-1.0, 1.0]], &["a", "b"]);
        let b = sm(array![[1.0, 1.0], [1.0, 1.0]], &["a", "b"]);
        let agg = aggregate_mean_std(&[a, b]).unwrap();
        assert_eq!(agg.std_bound_violations(1e-9).len(), 2);
    }
}
