use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sets::{enumerate_pairs, ModelSet};
use crate::error::{Error, Result};
use crate::math::{l2_normalize, EmbeddingMatrix, Measure, Prepared, DEFAULT_RBF_BLOCK};
use crate::store::{Embedding, FeatureStore, LabelVector, SampleIndexSet, Split};

/// Where per-(dataset, model) embeddings come from.
pub trait EmbeddingSource: Sync {
    fn embedding(&self, dataset: &str, model: &str) -> Result<Arc<Embedding>>;
}

impl EmbeddingSource for FeatureStore {
    fn embedding(&self, dataset: &str, model: &str) -> Result<Arc<Embedding>> {
        self.load(dataset, model, Split::Train)
    }
}

/// In-memory source, keyed by `(dataset, model)`.
#[derive(Debug, Default, Clone)]
pub struct MemorySource {
    entries: HashMap<(String, String), Arc<Embedding>>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, matrix: EmbeddingMatrix, labels: Option<LabelVector>) {
        let key = (matrix.dataset_id.clone(), matrix.model_id.clone());
        self.entries
            .insert(key, Arc::new(Embedding { matrix, labels }));
    }
}

impl EmbeddingSource for MemorySource {
    fn embedding(&self, dataset: &str, model: &str) -> Result<Arc<Embedding>> {
        self.entries
            .get(&(dataset.to_string(), model.to_string()))
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding {
                model: model.to_string(),
                dataset: dataset.to_string(),
            })
    }
}

/// Labels of a dataset, taken from the first listed model that has them.
pub fn dataset_labels(
    source: &dyn EmbeddingSource,
    dataset: &str,
    models: &[String],
) -> Result<Option<LabelVector>> {
    for m in models {
        if let Some(l) = &source.embedding(dataset, m)?.labels {
            return Ok(Some(l.clone()));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimilarityOptions {
    pub rbf_block: usize,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        Self {
            rbf_block: DEFAULT_RBF_BLOCK,
        }
    }
}

/// Per-dataset similarities over a canonical pair list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector {
    pub dataset_id: String,
    pub theta_set: String,
    pub phi_set: String,
    pub pairs: Vec<(String, String)>,
    pub values: Vec<f64>,
    pub measure: Measure,
}

impl SimilarityVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Symmetric `m x m` similarity matrix of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub dataset_id: String,
    pub measure: Measure,
    pub models: Vec<String>,
    pub values: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn index_of(&self, model: &str) -> Option<usize> {
        self.models.iter().position(|m| m == model)
    }

    /// Looks up the similarity vector for a model-set pair.
    pub fn vector_for(&self, theta: &ModelSet, phi: &ModelSet) -> Result<SimilarityVector> {
        let pairs = enumerate_pairs(theta, phi)?;
        let values = pairs
            .iter()
            .map(|(a, b)| {
                let ia = self.index_of(a).ok_or_else(|| missing(a, &self.dataset_id))?;
                let ib = self.index_of(b).ok_or_else(|| missing(b, &self.dataset_id))?;
                Ok(self.values[[ia, ib]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SimilarityVector {
            dataset_id: self.dataset_id.clone(),
            theta_set: theta.set_id.clone(),
            phi_set: phi.set_id.clone(),
            pairs,
            values,
            measure: self.measure,
        })
    }
}

fn missing(model: &str, dataset: &str) -> Error {
    Error::MissingEmbedding {
        model: model.to_string(),
        dataset: dataset.to_string(),
    }
}

/// Gathers the sampled rows and L2-normalizes them.
pub fn sampled_matrix(
    source: &dyn EmbeddingSource,
    dataset: &str,
    model: &str,
    sampling: &SampleIndexSet,
) -> Result<EmbeddingMatrix> {
    let e = source.embedding(dataset, model)?;
    let rows = e.matrix.select_rows(&sampling.indices)?;
    l2_normalize(&rows).map_err(|err| err.for_model(model, dataset))
}

/// Prepares each model once for `measure`, in parallel, in input order.
fn prepare_models(
    source: &dyn EmbeddingSource,
    dataset: &str,
    models: &[String],
    measure: Measure,
    sampling: &SampleIndexSet,
    opts: SimilarityOptions,
) -> Result<Vec<Prepared>> {
    models
        .par_iter()
        .map(|m| {
            let z = sampled_matrix(source, dataset, m, sampling)?;
            Prepared::new(measure, &z, opts.rbf_block).map_err(|e| e.for_model(m, dataset))
        })
        .collect()
}

fn compare_pairs(
    prepared: &[Prepared],
    index: &HashMap<&str, usize>,
    pairs: &[(String, String)],
) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .map(|(a, b)| {
            prepared[index[a.as_str()]]
                .compare(&prepared[index[b.as_str()]])
                .map(|v| v.value)
                .map_err(|e| e.for_pair(a, b))
        })
        .collect()
}

/// Similarity vector `s` for one dataset and a model-set pair.
pub fn similarity_vector(
    source: &dyn EmbeddingSource,
    dataset: &str,
    theta: &ModelSet,
    phi: &ModelSet,
    measure: Measure,
    sampling: &SampleIndexSet,
    opts: SimilarityOptions,
) -> Result<SimilarityVector> {
    let pairs = enumerate_pairs(theta, phi)?;
    let mut models: Vec<String> = pairs
        .iter()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect();
    models.sort();
    models.dedup();
    let prepared = prepare_models(source, dataset, &models, measure, sampling, opts)?;
    let index: HashMap<&str, usize> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_str(), i))
        .collect();
    let values = compare_pairs(&prepared, &index, &pairs)?;
    Ok(SimilarityVector {
        dataset_id: dataset.to_string(),
        theta_set: theta.set_id.clone(),
        phi_set: phi.set_id.clone(),
        pairs,
        values,
        measure,
    })
}

/// All pairwise similarities among `models` on one dataset. The diagonal is 1.
pub fn similarity_matrix(
    source: &dyn EmbeddingSource,
    dataset: &str,
    models: &ModelSet,
    measure: Measure,
    sampling: &SampleIndexSet,
    opts: SimilarityOptions,
) -> Result<SimilarityMatrix> {
    let names = &models.members;
    let prepared = prepare_models(source, dataset, names, measure, sampling, opts)?;
    let m = names.len();
    let upper: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = upper
        .par_iter()
        .map(|&(i, j)| {
            prepared[i]
                .compare(&prepared[j])
                .map(|v| v.value)
                .map_err(|e| e.for_pair(&names[i], &names[j]))
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::from_elem((m, m), 1.0);
    for (&(i, j), v) in upper.iter().zip(values) {
        out[[i, j]] = v;
        out[[j, i]] = v;
    }
    Ok(SimilarityMatrix {
        dataset_id: dataset.to_string(),
        measure,
        models: names.clone(),
        values: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::similarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Models sharing a latent signal plus independent noise of given scale.
    fn synthetic(dataset: &str, noise: &[f64], n: usize, seed: u64) -> MemorySource {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latent = Array2::from_shape_fn((n, 6), |_| rng.gen_range(-1.0..1.0));
        let mut src = MemorySource::new();
        for (k, &s) in noise.iter().enumerate() {
            let data = Array2::from_shape_fn((n, 6), |(i, j)| {
                latent[[i, j]] + s * rng.gen_range(-1.0..1.0)
            });
            src.insert(
                EmbeddingMatrix::new(format!("m{}", k + 1), dataset, data).unwrap(),
                None,
            );
        }
        src
    }

    fn set(id: &str, m: &[&str]) -> ModelSet {
        ModelSet::new(id, m.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn identical_models_give_one() {
        let src = synthetic("d", &[0.3], 40, 1);
        let mut src2 = src.clone();
        let e = src.embedding("d", "m1").unwrap();
        let mut copy = e.matrix.clone();
        copy.model_id = "m2".into();
        src2.insert(copy, None);
        let s = set("s", &["m1", "m2"]);
        let v = similarity_vector(
            &src2,
            "d",
            &s,
            &s,
            Measure::CkaLinear,
            &SampleIndexSet::all(40),
            SimilarityOptions::default(),
        )
        .unwrap();
        assert_eq!(v.values.len(), 1);
        assert!((v.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cached_vector_matches_direct_pairs() {
        let src = synthetic("d", &[0.1, 0.5, 2.0], 60, 2);
        let s = set("s", &["m1", "m2", "m3"]);
        let sampling = SampleIndexSet::all(60);
        for measure in [
            Measure::CkaLinear,
            Measure::CkaRbf { sigma_frac: 0.4 },
            Measure::RsaSpearman,
        ] {
            let v = similarity_vector(&src, "d", &s, &s, measure, &sampling, Default::default())
                .unwrap();
            for ((a, b), &value) in v.pairs.iter().zip(&v.values) {
                let za = sampled_matrix(&src, "d", a, &sampling).unwrap();
                let zb = sampled_matrix(&src, "d", b, &sampling).unwrap();
                let direct = similarity(measure, &za, &zb, DEFAULT_RBF_BLOCK).unwrap().value;
                assert_eq!(value.to_bits(), direct.to_bits());
            }
            assert!(v.pairs.iter().all(|(a, b)| a != b));
        }
        // more noise -> less similar to m1
        let v = similarity_vector(&src, "d", &s, &s, Measure::CkaLinear, &sampling, Default::default())
            .unwrap();
        assert_eq!(v.pairs[0], ("m1".into(), "m2".into()));
        assert!(v.values[0] > v.values[1]);
    }

    #[test]
    fn matrix_agrees_with_vector_and_permutes() {
        let src = synthetic("d", &[0.2, 0.4, 0.8, 1.6], 50, 3);
        let sampling = SampleIndexSet::all(50);
        let models = set("all", &["m1", "m2", "m3", "m4"]);
        let m = similarity_matrix(&src, "d", &models, Measure::CkaLinear, &sampling, Default::default())
            .unwrap();
        let v = similarity_vector(&src, "d", &models, &models, Measure::CkaLinear, &sampling, Default::default())
            .unwrap();
        assert_eq!(m.vector_for(&models, &models).unwrap(), v);
        for i in 0..4 {
            assert_eq!(m.values[[i, i]], 1.0);
        }
        let perm = set("all", &["m3", "m1", "m4", "m2"]);
        let mp = similarity_matrix(&src, "d", &perm, Measure::CkaLinear, &sampling, Default::default())
            .unwrap();
        for (i, a) in perm.members.iter().enumerate() {
            for (j, b) in perm.members.iter().enumerate() {
                let oi = m.index_of(a).unwrap();
                let oj = m.index_of(b).unwrap();
                assert_eq!(mp.values[[i, j]], m.values[[oi, oj]]);
            }
        }
    }

    #[test]
    fn missing_embedding_reported() {
        let src = synthetic("d", &[0.2, 0.4], 20, 4);
        let s = set("s", &["m1", "mX"]);
        let err = similarity_vector(
            &src,
            "d",
            &s,
            &s,
            Measure::CkaLinear,
            &SampleIndexSet::all(20),
            Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding { .. }));
    }
}
