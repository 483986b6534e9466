//! Embedding files, registries and sampling.
//!
//! On-disk layout under a feature root:
//!
//! ```text
//! <root>/<dataset_id>/<model_id>/features.npy       (n, p) <f4 or <f8
//! <root>/<dataset_id>/<model_id>/labels.npy         (n,)   <i8
//! <root>/<dataset_id>/<model_id>/test_features.npy  optional probe test split
//! <root>/<dataset_id>/<model_id>/test_labels.npy
//! ```

pub mod meta;
pub mod npy;
pub mod sampling;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use ndarray::Array2;

pub use meta::{
    ArchitectureClass, DatasetCategory, DatasetMeta, DatasetRegistry, ModelMeta, ModelRegistry,
    Objective, SizeClass, TrainingDataClass,
};
pub use sampling::{
    bootstrap_indices, stratified_subsample, uniform_subsample, SampleIndexSet, SampleKind,
};

use crate::error::{Error, Result};
use crate::math::EmbeddingMatrix;
use npy::{NpyData, NpyArray};

pub const FEATURES_FILE: &str = "features.npy";
pub const LABELS_FILE: &str = "labels.npy";
pub const TEST_FEATURES_FILE: &str = "test_features.npy";
pub const TEST_LABELS_FILE: &str = "test_labels.npy";

/// Class indices for the rows of one embedding matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Number of distinct classes actually present.
    pub fn present_classes(&self) -> usize {
        let mut seen = vec![false; self.num_classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// One split of one (model, dataset) pair.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub matrix: EmbeddingMatrix,
    pub labels: Option<LabelVector>,
}

fn matrix_from_npy(arr: NpyArray, path: &Path, model: &str, dataset: &str) -> Result<EmbeddingMatrix> {
    let [n, p] = arr.header.shape[..] else {
        return Err(Error::ShapeMismatch(format!(
            "{}: expected a 2-D (n, p) array, got shape {:?}",
            path.display(),
            arr.header.shape
        )));
    };
    let NpyData::Float(values) = arr.data else {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "features must be <f4 or <f8".into(),
        });
    };
    let data = Array2::from_shape_vec((n, p), values)
        .map_err(|e| Error::ShapeMismatch(format!("{}: {e}", path.display())))?;
    EmbeddingMatrix::new(model, dataset, data)
}

/// Reads a bare `(n, p)` float feature file with no registry checks.
pub fn read_feature_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    matrix_from_npy(npy::read_npy(path)?, path, "", "")
}

fn labels_from_npy(arr: NpyArray, path: &Path, n: usize, num_classes: usize) -> Result<LabelVector> {
    if arr.header.shape != [n] {
        return Err(Error::ShapeMismatch(format!(
            "{}: labels have shape {:?}, expected ({n},)",
            path.display(),
            arr.header.shape
        )));
    }
    let NpyData::Int(values) = arr.data else {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "labels must be <i4 or <i8".into(),
        });
    };
    let labels = values
        .into_iter()
        .map(|v| {
            usize::try_from(v).map_err(|_| {
                Error::InvalidInput(format!("{}: negative label {v}", path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabelVector::new(labels, num_classes)
}

/// Reads one feature file (and its label file, if present) and checks ids
/// against the registries.
pub fn load_embedding(
    features: &Path,
    labels: Option<&Path>,
    model_id: &str,
    dataset_id: &str,
    models: &ModelRegistry,
    datasets: &DatasetRegistry,
) -> Result<Embedding> {
    models.get(model_id)?;
    let dataset = datasets.get(dataset_id)?;
    let matrix = matrix_from_npy(npy::read_npy(features)?, features, model_id, dataset_id)?;
    let labels = match labels {
        Some(path) => Some(labels_from_npy(
            npy::read_npy(path)?,
            path,
            matrix.n(),
            dataset.num_classes,
        )?),
        None => None,
    };
    Ok(Embedding { matrix, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

type CacheKey = (String, String, Split);

/// Read-only view of a feature root with a per-process load cache.
#[derive(Debug)]
pub struct FeatureStore {
    root: PathBuf,
    pub models: ModelRegistry,
    pub datasets: DatasetRegistry,
    cache: RwLock<HashMap<CacheKey, Arc<Embedding>>>,
}

impl FeatureStore {
    pub fn new(root: impl Into<PathBuf>, models: ModelRegistry, datasets: DatasetRegistry) -> Self {
        Self {
            root: root.into(),
            models,
            datasets,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn pair_dir(&self, dataset_id: &str, model_id: &str) -> PathBuf {
        self.root.join(dataset_id).join(model_id)
    }

    pub fn has(&self, dataset_id: &str, model_id: &str, split: Split) -> bool {
        let file = match split {
            Split::Train => FEATURES_FILE,
            Split::Test => TEST_FEATURES_FILE,
        };
        self.pair_dir(dataset_id, model_id).join(file).is_file()
    }

    /// Loads (or returns the cached) embedding for a pair and split.
    pub fn load(&self, dataset_id: &str, model_id: &str, split: Split) -> Result<Arc<Embedding>> {
        let key = (dataset_id.to_string(), model_id.to_string(), split);
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        if !self.has(dataset_id, model_id, split) {
            self.models.get(model_id)?;
            self.datasets.get(dataset_id)?;
            return Err(Error::MissingEmbedding {
                model: model_id.to_string(),
                dataset: dataset_id.to_string(),
            });
        }
        let dir = self.pair_dir(dataset_id, model_id);
        let (f, l) = match split {
            Split::Train => (FEATURES_FILE, LABELS_FILE),
            Split::Test => (TEST_FEATURES_FILE, TEST_LABELS_FILE),
        };
        let labels = dir.join(l);
        let loaded = Arc::new(load_embedding(
            &dir.join(f),
            labels.is_file().then_some(labels.as_path()),
            model_id,
            dataset_id,
            &self.models,
            &self.datasets,
        )?);
        let mut cache = self.cache.write().expect("cache lock");
        Ok(Arc::clone(cache.entry(key).or_insert(loaded)))
    }

    /// Drops every cached matrix of one dataset.
    pub fn evict_dataset(&self, dataset_id: &str) {
        self.cache
            .write()
            .expect("cache lock")
            .retain(|(d, _, _), _| d != dataset_id);
    }
}

/// Writes one (model, dataset) pair in store layout. Used by tests, the
/// synthetic-data generator and anything producing features from Rust.
pub fn write_embedding(
    root: &Path,
    dataset_id: &str,
    model_id: &str,
    split: Split,
    data: &Array2<f64>,
    labels: Option<&[usize]>,
    dtype: npy::Dtype,
) -> Result<()> {
    let dir = root.join(dataset_id).join(model_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let (f, l) = match split {
        Split::Train => (FEATURES_FILE, LABELS_FILE),
        Split::Test => (TEST_FEATURES_FILE, TEST_LABELS_FILE),
    };
    let (n, p) = data.dim();
    let flat: Vec<f64> = data.iter().copied().collect();
    npy::write_matrix(&dir.join(f), &flat, n, p, dtype)?;
    if let Some(labels) = labels {
        let ints: Vec<i64> = labels.iter().map(|&v| v as i64).collect();
        npy::write_labels(&dir.join(l), &ints)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn registries() -> (ModelRegistry, DatasetRegistry) {
        let m = ModelMeta {
            model_id: "m1".into(),
            objective: Objective::Ssl,
            training_data_class: TrainingDataClass::IN1k,
            architecture_class: ArchitectureClass::Cnn,
            size_class: SizeClass::Small,
            param_count: 1,
            rep_layer: "avgpool".into(),
        };
        let d = DatasetMeta {
            dataset_id: "d1".into(),
            category: DatasetCategory::NaturalMulti,
            num_classes: 2,
        };
        (
            ModelRegistry::new(vec![m]).unwrap(),
            DatasetRegistry::new(vec![d]).unwrap(),
        )
    }

    #[test]
    fn round_trip_float32() {
        let dir = tempfile::tempdir().unwrap();
        let data = array![[0.5, 1.0, -2.0], [3.0, 0.25, 1.0], [1.0, 1.0, 1.0], [0.0, 2.0, 4.0]];
        write_embedding(dir.path(), "d1", "m1", Split::Train, &data, Some(&[0, 1, 0, 1]), npy::Dtype::F4)
            .unwrap();
        let (m, d) = registries();
        let store = FeatureStore::new(dir.path(), m, d);
        let e = store.load("d1", "m1", Split::Train).unwrap();
        assert_eq!((e.matrix.n(), e.matrix.p()), (4, 3));
        assert_eq!(e.matrix.data(), &data);
        assert_eq!(e.labels.as_ref().unwrap().labels, vec![0, 1, 0, 1]);
        // second load is served from cache
        assert!(Arc::ptr_eq(&e, &store.load("d1", "m1", Split::Train).unwrap()));
    }

    #[test]
    fn nan_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = Array2::<f64>::ones((4, 3));
        data[[2, 1]] = f64::NAN;
        write_embedding(dir.path(), "d1", "m1", Split::Train, &data, None, npy::Dtype::F8).unwrap();
        let (m, d) = registries();
        let store = FeatureStore::new(dir.path(), m, d);
        assert!(matches!(
            store.load("d1", "m1", Split::Train).as_deref().map(|_| ()),
            Err(Error::NonFiniteValue { row: 2, col: 1 })
        ));
    }

    #[test]
    fn label_problems() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array2::<f64>::ones((3, 2));
        write_embedding(dir.path(), "d1", "m1", Split::Train, &data, Some(&[0, 1]), npy::Dtype::F8)
            .unwrap();
        let (m, d) = registries();
        let store = FeatureStore::new(dir.path(), m.clone(), d.clone());
        assert!(matches!(
            store.load("d1", "m1", Split::Train),
            Err(Error::ShapeMismatch(_))
        ));
        write_embedding(dir.path(), "d1", "m1", Split::Train, &data, Some(&[0, 1, 5]), npy::Dtype::F8)
            .unwrap();
        let store = FeatureStore::new(dir.path(), m, d);
        assert!(store.load("d1", "m1", Split::Train).is_err());
    }

    #[test]
    fn missing_and_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let (m, d) = registries();
        let store = FeatureStore::new(dir.path(), m, d);
        assert!(matches!(
            store.load("d1", "m1", Split::Train),
            Err(Error::MissingEmbedding { .. })
        ));
        assert!(matches!(
            store.load("d1", "zz", Split::Train),
            Err(Error::UnknownModel(_))
        ));
        assert!(matches!(
            store.load("dx", "m1", Split::Train),
            Err(Error::UnknownDataset(_))
        ));
    }

    #[test]
    fn one_dimensional_features_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        npy::write_labels(&path, &[1, 2, 3]).unwrap();
        let (m, d) = registries();
        assert!(load_embedding(&path, None, "m1", "d1", &m, &d).is_err());
    }
}
