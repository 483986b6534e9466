use std::collections::HashMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::model::evaluate_top1;
use super::search::{hyperparameter_search, GridEval, SearchSettings};
use super::train::{train_probe, ProbeHyperparams};
use crate::analysis::SimilarityVector;
use crate::error::{Error, Result};
use crate::math::{l2_normalize, pearson};
use crate::store::{Embedding, FeatureStore, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub top1: f64,
    pub chosen: ProbeHyperparams,
    pub val_top1: f64,
    pub trace: Vec<GridEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub model_id: String,
    pub dataset_id: String,
    /// Mean test top-1 over seeds.
    pub top1: f64,
    /// Hyperparameters chosen for the first seed.
    pub chosen: ProbeHyperparams,
    pub per_seed: Vec<SeedResult>,
}

fn labelled(e: &Embedding, what: &str) -> Result<Vec<usize>> {
    e.labels.as_ref().map(|l| l.labels.clone()).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{what} split of `{}` on `{}` has no labels",
            e.matrix.model_id, e.matrix.dataset_id
        ))
    })
}

/// For each seed: search hyperparameters on the training rows, retrain on
/// all of them, and score on the test rows. Features are L2-normalized first.
pub fn run_probe_protocol(
    train: &Embedding,
    test: &Embedding,
    classes: usize,
    seeds: &[u64],
    settings: &SearchSettings,
) -> Result<ProbeResult> {
    if seeds.is_empty() {
        return Err(Error::config("probe.seeds", "must not be empty"));
    }
    let (model_id, dataset_id) = (&train.matrix.model_id, &train.matrix.dataset_id);
    let annotate = |e: Error| e.for_model(model_id, dataset_id);
    if train.matrix.p() != test.matrix.p() {
        return Err(annotate(Error::DimensionMismatch(format!(
            "train has {} features, test has {}",
            train.matrix.p(),
            test.matrix.p()
        ))));
    }
    let ytr = labelled(train, "train")?;
    let yte = labelled(test, "test")?;
    let xtr = l2_normalize(&train.matrix).map_err(annotate)?;
    let xte = l2_normalize(&test.matrix).map_err(annotate)?;

    let per_seed = seeds
        .iter()
        .map(|&seed| {
            let outcome = hyperparameter_search(xtr.data().view(), &ytr, classes, seed, settings)?;
            let model = train_probe(xtr.data().view(), &ytr, classes, &outcome.chosen)?;
            Ok(SeedResult {
                seed,
                top1: evaluate_top1(&model, xte.data().view(), &yte),
                chosen: outcome.chosen,
                val_top1: outcome.val_top1,
                trace: outcome.trace,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(annotate)?;
    let top1 = per_seed.iter().map(|s| s.top1).sum::<f64>() / per_seed.len() as f64;
    Ok(ProbeResult {
        model_id: model_id.clone(),
        dataset_id: dataset_id.clone(),
        top1,
        chosen: per_seed[0].chosen,
        per_seed,
    })
}

/// Loads both splits from the store and runs [`run_probe_protocol`].
pub fn run_probe_from_store(
    store: &FeatureStore,
    model: &str,
    dataset: &str,
    seeds: &[u64],
    settings: &SearchSettings,
) -> Result<ProbeResult> {
    let classes = store.datasets.get(dataset)?.num_classes;
    let train = store.load(dataset, model, Split::Train)?;
    let test = store.load(dataset, model, Split::Test)?;
    run_probe_protocol(&train, &test, classes, seeds, settings)
}

/// Direct probe on in-memory features without a search.
pub fn probe_accuracy(
    xtr: ArrayView2<f64>,
    ytr: &[usize],
    xte: ArrayView2<f64>,
    yte: &[usize],
    classes: usize,
    hp: &ProbeHyperparams,
) -> Result<f64> {
    let m = train_probe(xtr, ytr, classes, hp)?;
    Ok(evaluate_top1(&m, xte, yte))
}

/// Pearson correlation between per-pair accuracy gaps `|top1_a - top1_b|`
/// and the pair similarities, in the vector's pair order.
pub fn performance_gap_correlation(results: &[ProbeResult], sims: &SimilarityVector) -> Result<f64> {
    let top1: HashMap<&str, f64> = results
        .iter()
        .filter(|r| r.dataset_id == sims.dataset_id)
        .map(|r| (r.model_id.as_str(), r.top1))
        .collect();
    let lookup = |m: &str| {
        top1.get(m).copied().ok_or_else(|| {
            Error::InvalidInput(format!(
                "no probe result for model `{m}` on dataset `{}`",
                sims.dataset_id
            ))
        })
    };
    let gaps = sims
        .pairs
        .iter()
        .map(|(a, b)| Ok((lookup(a)? - lookup(b)?).abs()))
        .collect::<Result<Vec<_>>>()?;
    pearson(&gaps, &sims.values)
}
