mod common;

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use repsim::analysis::{
    aggregate_mean_std, consistency, enumerate_pairs, similarity_matrix, MemorySource, ModelSet, SimilarityMatrix,
    SimilarityOptions, SimilarityVector,
};
use repsim::math::{
    self, center_gram, cka_dense, cka_linear_feature, cka_rbf_streaming, gram, hsic_biased, lower_triangle,
    rdm_pearson, EmbeddingMatrix, GramMatrix, KernelSpec, Measure, RsaPrepared,
};
use repsim::probe::{cosine_lr, train_probe, ProbeHyperparams};
use repsim::store::npy::Dtype;
use repsim::store::{
    bootstrap_indices, stratified_subsample, uniform_subsample, write_embedding, DatasetRegistry, FeatureStore,
    ModelRegistry, SampleIndexSet, Split,
};

fn matrix(seed: u64, n: usize, p: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::from_array(common::random_matrix(&mut common::rng(seed), n, p)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn orthogonal(seed: u64, p: usize) -> Array2<f64> {
    let mut q = common::random_matrix(&mut common::rng(seed), p, p);
    for j in 0..p {
        for k in 0..j {
            let d = q.column(j).dot(&q.column(k));
            let ck = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-d, &ck);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

const RBF: KernelSpec = KernelSpec::Rbf { sigma_frac: 0.4 };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn self_cka_is_one(seed in any::<u64>(), n in 8usize..80, p in 2usize..12) {
        let z = matrix(seed, n, p);
        prop_assert!((cka_linear_feature(&z, &z).unwrap().raw - 1.0).abs() <= 1e-12);
        prop_assert!((cka_dense(&z, &z, RBF).unwrap().raw - 1.0).abs() <= 1e-12);
        prop_assert!((cka_rbf_streaming(&z, &z, RBF, 13).unwrap().raw - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn linear_cka_scale_and_rotation_invariant(seed in any::<u64>(), n in 8usize..80, p in 2usize..10, c in 1e-3f64..1e3) {
        let zx = matrix(seed, n, p);
        let zy = matrix(seed ^ 1, n, p + 1);
        let base = cka_linear_feature(&zx, &zy).unwrap().raw;
        let q = orthogonal(seed ^ 2, p);
        let rotated = EmbeddingMatrix::from_array(zx.data().dot(&q)).unwrap();
        let scaled = EmbeddingMatrix::from_array(zy.data() * c).unwrap();
        prop_assert!((cka_linear_feature(&rotated, &zy).unwrap().raw - base).abs() <= 1e-8);
        prop_assert!((cka_linear_feature(&zx, &scaled).unwrap().raw - base).abs() <= 1e-8);
    }

    #[test]
    fn similarity_is_exactly_symmetric(seed in any::<u64>(), n in 8usize..60, p in 2usize..8) {
        let zx = matrix(seed, n, p);
        let zy = matrix(seed ^ 3, n, p + 2);
        for m in [Measure::CkaLinear, Measure::CkaRbf { sigma_frac: 0.3 }, Measure::RsaSpearman] {
            let a = math::similarity(m, &zx, &zy, 16).unwrap().raw;
            let b = math::similarity(m, &zy, &zx, 16).unwrap().raw;
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn linear_feature_path_matches_gram_path(seed in any::<u64>(), n in 8usize..=512, p in 2usize..=64, q in 2usize..=64) {
        let zx = matrix(seed, n, p);
        let zy = matrix(seed ^ 4, n, q);
        let f = cka_linear_feature(&zx, &zy).unwrap().raw;
        let g = cka_dense(&zx, &zy, KernelSpec::Linear).unwrap().raw;
        prop_assert!(rel(f, g) <= 1e-10, "{} vs {}", f, g);
    }

    #[test]
    fn streaming_rbf_matches_dense(seed in any::<u64>(), n in 8usize..120, p in 2usize..10, frac in 0.1f64..2.0) {
        let zx = matrix(seed, n, p);
        let zy = matrix(seed ^ 5, n, p);
        let spec = KernelSpec::Rbf { sigma_frac: frac };
        let dense = cka_dense(&zx, &zy, spec).unwrap().raw;
        for block in [1, 7, 64, n] {
            let s = cka_rbf_streaming(&zx, &zy, spec, block).unwrap().raw;
            prop_assert!(rel(s, dense) <= 1e-10, "block {}: {} vs {}", block, s, dense);
        }
    }

    #[test]
    fn hsic_self_nonnegative_and_constant_kernel_zero(seed in any::<u64>(), n in 3usize..60, c in -5.0f64..5.0) {
        let z = matrix(seed, n, 3);
        for spec in [KernelSpec::Linear, RBF] {
            let kc = center_gram(&gram(&z, spec).unwrap());
            prop_assert!(hsic_biased(&kc, &kc).unwrap() >= 0.0);
            let lc = center_gram(&GramMatrix { data: Array2::from_elem((n, n), c), centered: false, kernel: spec });
            prop_assert_eq!(hsic_biased(&kc, &lc).unwrap(), 0.0);
        }
    }

    #[test]
    fn rsa_invariant_to_monotone_transforms(seed in any::<u64>(), n in 6usize..40, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let tx = lower_triangle(&rdm_pearson(&matrix(seed, n, 5)).unwrap());
        let ty = RsaPrepared::from_triangle(&lower_triangle(&rdm_pearson(&matrix(seed ^ 6, n, 4)).unwrap())).unwrap();
        let base = RsaPrepared::from_triangle(&tx).unwrap().compare(&ty).unwrap().raw;
        let fs: [Box<dyn Fn(f64) -> f64>; 3] = [Box::new(move |x| a * x + b), Box::new(|x: f64| x.exp()), Box::new(|x: f64| x.powi(3))];
        for f in &fs {
            let t: Vec<f64> = tx.iter().map(|&v| f(v)).collect();
            let v = RsaPrepared::from_triangle(&t).unwrap().compare(&ty).unwrap().raw;
            prop_assert!((v - base).abs() <= 1e-12);
        }
    }

    #[test]
    fn repeated_calls_are_bitwise_identical(seed in any::<u64>(), n in 8usize..60, block in 1usize..70) {
        let zx = matrix(seed, n, 4);
        let zy = matrix(seed ^ 7, n, 6);
        for m in [Measure::CkaLinear, Measure::CkaRbf { sigma_frac: 0.2 }, Measure::RsaSpearman] {
            let a = math::similarity(m, &zx, &zy, block).unwrap().raw;
            let b = math::similarity(m, &zx, &zy, block).unwrap().raw;
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

fn histogram(labels: &[usize], idx: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &i in idx {
        *h.entry(labels[i]).or_insert(0) += 1;
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stratified_equal_classes_within_one_of_proportional(seed in any::<u64>(), classes in 1usize..12, per in 1usize..30, frac in 0.05f64..1.0) {
        let labels: Vec<usize> = (0..classes * per).map(|i| i % classes).collect();
        let target = ((labels.len() as f64 * frac).ceil() as usize).max(1);
        let s = stratified_subsample(&labels, target, seed).unwrap();
        prop_assert_eq!(s.indices.len(), target.min(labels.len()));
        prop_assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
        let h = histogram(&labels, &s.indices);
        let exact = target as f64 / classes as f64;
        for c in 0..classes {
            let got = *h.get(&c).unwrap_or(&0) as f64;
            prop_assert!((got - exact).abs() <= 1.0, "class {} got {} vs {}", c, got, exact);
        }
    }

    #[test]
    fn stratified_quotas_are_balanced(seed in any::<u64>(), sizes in prop::collection::vec(1usize..25, 1..8), frac in 0.05f64..1.0) {
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(c, k)).collect();
        let target = ((labels.len() as f64 * frac).ceil() as usize).max(1);
        let s = stratified_subsample(&labels, target, seed).unwrap();
        prop_assert_eq!(s.indices.len(), target);
        let h = histogram(&labels, &s.indices);
        // classes not fully taken differ by at most one, and none exceeds a fully taken class by more than one
        let partial: Vec<usize> = (0..sizes.len()).filter(|&c| h.get(&c).copied().unwrap_or(0) < sizes[c]).map(|c| h.get(&c).copied().unwrap_or(0)).collect();
        if let (Some(lo), Some(hi)) = (partial.iter().min(), partial.iter().max()) {
            prop_assert!(hi - lo <= 1);
            for (c, &size) in sizes.iter().enumerate() {
                if h.get(&c).copied().unwrap_or(0) == size {
                    prop_assert!(size <= hi + 1);
                }
            }
        }
        prop_assert_eq!(&s, &stratified_subsample(&labels, target, seed).unwrap());
    }

    #[test]
    fn sampling_is_a_pure_function_of_seed(seed in any::<u64>(), n in 1usize..200, k in 1usize..200) {
        prop_assert_eq!(uniform_subsample(n, k, seed).unwrap(), uniform_subsample(n, k, seed).unwrap());
        let b = bootstrap_indices(n, k, seed).unwrap();
        prop_assert_eq!(b.indices.len(), k);
        prop_assert!(b.indices.iter().all(|&i| i < n));
        prop_assert_eq!(&b, &bootstrap_indices(n, k, seed).unwrap());
    }
}

#[test]
fn stored_rows_round_trip_through_selection() {
    let dir = tempfile::tempdir().unwrap();
    let models = common::model_ids(2);
    let dataset = common::dataset_ids(1).remove(0);
    let data = common::random_matrix(&mut common::rng(8), 50, 7);
    write_embedding(dir.path(), &dataset, &models[0], Split::Train, &data, None, Dtype::F8).unwrap();
    write_embedding(dir.path(), &dataset, &models[1], Split::Train, &data, None, Dtype::F4).unwrap();
    let store = FeatureStore::new(dir.path(), ModelRegistry::builtin(), DatasetRegistry::builtin());
    let idx = [3usize, 0, 49, 17, 17];
    let exact = store.load(&dataset, &models[0], Split::Train).unwrap().matrix.select_rows(&idx).unwrap();
    assert_eq!(exact.data(), &data.select(Axis(0), &idx));
    let promoted = store.load(&dataset, &models[1], Split::Train).unwrap().matrix.select_rows(&idx).unwrap();
    assert_eq!(promoted.data(), &data.select(Axis(0), &idx).mapv(|v| v as f32 as f64));
}

fn vector(dataset: &str, pairs: &[(String, String)], values: Vec<f64>) -> SimilarityVector {
    SimilarityVector {
        dataset_id: dataset.into(),
        theta_set: "t".into(),
        phi_set: "p".into(),
        pairs: pairs.to_vec(),
        values,
        measure: Measure::CkaLinear,
    }
}

fn names(k: usize, prefix: &str) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i:02}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pair_list_sizes(t in 1usize..10, f in 1usize..10) {
        let theta = ModelSet::new("t", names(t, "a")).unwrap();
        let phi = ModelSet::new("p", names(f, "b")).unwrap();
        prop_assert_eq!(enumerate_pairs(&theta, &phi).unwrap().len(), t * f);
        if t >= 2 {
            prop_assert_eq!(enumerate_pairs(&theta, &theta).unwrap().len(), t * (t - 1) / 2);
        }
    }

    #[test]
    fn consistency_symmetric_and_self_one(a in prop::collection::vec(0.0f64..1.0, 6), b in prop::collection::vec(0.0f64..1.0, 6)) {
        let set = ModelSet::new("s", names(4, "m")).unwrap();
        let pairs = enumerate_pairs(&set, &set).unwrap();
        let va = vector("x", &pairs, a);
        let vb = vector("y", &pairs, b);
        if let (Ok(ab), Ok(ba)) = (consistency(&va, &vb), consistency(&vb, &va)) {
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert_eq!(consistency(&va, &va).unwrap(), 1.0);
        }
    }

    #[test]
    fn std_bound_holds(values in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 9), 2..10)) {
        let models = names(3, "m");
        let mats: Vec<SimilarityMatrix> = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut m = Array2::from_shape_vec((3, 3), v.clone()).unwrap();
                let t = m.t().to_owned();
                m = (&m + &t) / 2.0;
                m.diag_mut().fill(1.0);
                SimilarityMatrix { dataset_id: format!("d{i}"), measure: Measure::CkaLinear, models: models.clone(), values: m }
            })
            .collect();
        let agg = aggregate_mean_std(&mats).unwrap();
        prop_assert!(agg.std_bound_violations(1e-9).is_empty());
        for i in 0..3 {
            prop_assert_eq!(agg.std[[i, i]], 0.0);
        }
    }

    #[test]
    fn cosine_schedule_endpoints(eta in 1e-5f64..1.0, total in 1usize..10_000) {
        prop_assert_eq!(cosine_lr(eta, 0, total), eta);
        prop_assert!(cosine_lr(eta, total, total).abs() <= 1e-12 * eta);
    }
}

/// Consistency is unchanged by renaming models, even when the renaming
/// reorders the canonical pair list.
#[test]
fn relabeling_models_leaves_consistency_unchanged() {
    let build = |ids: &[String]| {
        let mut src = MemorySource::new();
        for (d, seed) in [("x", 1u64), ("y", 2)] {
            let mut r = common::rng(seed);
            let latent = common::random_matrix(&mut r, 40, 4);
            for (i, m) in ids.iter().enumerate() {
                let x = latent.dot(&common::random_matrix(&mut common::rng(100 + i as u64), 4, 5))
                    + common::random_matrix(&mut r, 40, 5) * (0.3 * i as f64 + 0.1);
                src.insert(EmbeddingMatrix::new(m.as_str(), d, x).unwrap(), None);
            }
        }
        let set = ModelSet::new("all", ids.to_vec()).unwrap();
        let v = |d: &str| {
            similarity_matrix(&src, d, &set, Measure::CkaLinear, &SampleIndexSet::all(40), SimilarityOptions::default())
                .unwrap()
                .vector_for(&set, &set)
                .unwrap()
        };
        consistency(&v("x"), &v("y")).unwrap()
    };
    let original = names(5, "m");
    let renamed: Vec<String> = ["zeta", "alpha", "mu", "beta", "omega"].iter().map(|s| s.to_string()).collect();
    let a = build(&original);
    let b = build(&renamed);
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
}

#[test]
fn training_is_deterministic_and_label_noise_hurts() {
    let mut wins = 0;
    for trial in 0..10u64 {
        let mut r = common::rng(50 + trial);
        let centers = common::random_matrix(&mut r, 4, 6) * 0.8;
        let make = |r: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let y: Vec<usize> = (0..n).map(|i| i % 4).collect();
            let x = Array2::from_shape_fn((n, 6), |(i, j)| centers[[y[i], j]] + common::gaussian(r));
            (x, y)
        };
        let (x, y) = make(&mut r, 400);
        let (xt, yt) = make(&mut r, 400);
        let mut noisy = y.clone();
        for (i, l) in noisy.iter_mut().enumerate() {
            if i % 5 < 2 {
                *l = (*l + 1 + i % 3) % 4;
            }
        }
        let hp = ProbeHyperparams { learning_rate: 0.05, weight_decay: 1e-4, epochs: 20, batch_size: 64, seed: trial };
        let clean = train_probe(x.view(), &y, 4, &hp).unwrap();
        assert_eq!(clean, train_probe(x.view(), &y, 4, &hp).unwrap());
        let dirty = train_probe(x.view(), &noisy, 4, &hp).unwrap();
        let acc = |m: &repsim::probe::ProbeModel| repsim::probe::evaluate_top1(m, xt.view(), &yt);
        if acc(&clean) >= acc(&dirty) {
            wins += 1;
        }
    }
    assert!(wins >= 8, "clean labels won only {wins}/10 trials");
}

#[test]
fn gap_correlation_independent_of_pair_orientation() {
    use repsim::probe::{performance_gap_correlation, ProbeResult};
    let hp = ProbeHyperparams { learning_rate: 0.1, weight_decay: 0.0, epochs: 1, batch_size: 1, seed: 0 };
    let results: Vec<ProbeResult> = [("a", 0.91), ("b", 0.72), ("c", 0.55), ("d", 0.8)]
        .iter()
        .map(|(m, t)| ProbeResult { model_id: m.to_string(), dataset_id: "d".into(), top1: *t, chosen: hp, per_seed: vec![] })
        .collect();
    let pairs: Vec<(String, String)> = [("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"), ("c", "d")]
        .iter()
        .map(|(x, y)| (x.to_string(), y.to_string()))
        .collect();
    let values = vec![0.7, 0.4, 0.8, 0.6, 0.9, 0.5];
    let flipped: Vec<(String, String)> = pairs.iter().map(|(x, y)| (y.clone(), x.clone())).collect();
    let v1 = vector("d", &pairs, values.clone());
    let v2 = vector("d", &flipped, values);
    assert_eq!(
        performance_gap_correlation(&results, &v1).unwrap().to_bits(),
        performance_gap_correlation(&results, &v2).unwrap().to_bits()
    );
}
