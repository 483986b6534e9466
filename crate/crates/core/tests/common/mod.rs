#![allow(dead_code)]

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repsim::store::npy::Dtype;
use repsim::store::{write_embedding, Split};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| gaussian(rng))
}

/// Class-structured latent shared by all models of a dataset; each model
/// sees it through its own random linear map plus noise.
pub fn write_synthetic_store(root: &Path, datasets: &[&str], models: &[&str], n: usize, classes: usize, seed: u64) {
    for (di, d) in datasets.iter().enumerate() {
        let mut r = rng(seed ^ ((di as u64 + 1) * 7919));
        let latent_dim = 6;
        let centers = random_matrix(&mut r, classes, latent_dim);
        for (split, rows) in [(Split::Train, n), (Split::Test, n / 2)] {
            let labels: Vec<usize> = (0..rows).map(|i| i % classes).collect();
            let latent = Array2::from_shape_fn((rows, latent_dim), |(i, j)| 2.0 * centers[[labels[i], j]] + gaussian(&mut r));
            for (mi, m) in models.iter().enumerate() {
                let mut mr = rng(seed ^ ((di * 1000 + mi) as u64 + 17));
                let p = 8 + 2 * mi;
                let map = random_matrix(&mut mr, latent_dim, p);
                let noise = 0.3 * (mi as f64 + 1.0);
                let mut x = latent.dot(&map);
                x.mapv_inplace(|v| v + noise * gaussian(&mut r));
                write_embedding(root, d, m, split, &x, Some(&labels), Dtype::F4).unwrap();
            }
        }
    }
}

/// First `count` builtin models, chosen to span several objectives.
pub fn model_ids(count: usize) -> Vec<String> {
    let reg = repsim::store::ModelRegistry::builtin();
    let mut out: Vec<String> = Vec::new();
    let mut seen = Vec::new();
    for m in reg.models() {
        if !seen.contains(&m.objective) {
            seen.push(m.objective);
            out.push(m.model_id.clone());
        }
    }
    for m in reg.models() {
        if out.len() >= count {
            break;
        }
        if !out.contains(&m.model_id) {
            out.push(m.model_id.clone());
        }
    }
    out.truncate(count);
    out
}

/// Builtin datasets with exactly 10 classes, matching the synthetic labels.
pub fn dataset_ids(count: usize) -> Vec<String> {
    let reg = repsim::store::DatasetRegistry::builtin();
    let ids: Vec<String> = reg
        .datasets()
        .iter()
        .filter(|d| d.num_classes == 10)
        .map(|d| d.dataset_id.clone())
        .collect();
    assert!(count <= ids.len());
    ids[..count].to_vec()
}
