use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "Img-Txt")]
    ImgTxt,
    #[serde(rename = "SSL")]
    Ssl,
    #[serde(rename = "Sup")]
    Sup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrainingDataClass {
    IN1k,
    IN21k,
    Large,
    XLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchitectureClass {
    #[serde(rename = "CNN")]
    Cnn,
    #[serde(rename = "TX")]
    Tx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
    Xlarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetCategory {
    #[serde(rename = "natural-multi")]
    NaturalMulti,
    #[serde(rename = "natural-single")]
    NaturalSingle,
    #[serde(rename = "specialized")]
    Specialized,
    #[serde(rename = "structured")]
    Structured,
}

/// Serialized name of an enum value, e.g. `Img-Txt`.
pub(crate) fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialize to strings"),
    }
}

macro_rules! display_via_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&enum_name(self))
            }
        }
    )*};
}
display_via_serde!(Objective, TrainingDataClass, ArchitectureClass, SizeClass, DatasetCategory);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub model_id: String,
    pub objective: Objective,
    pub training_data_class: TrainingDataClass,
    pub architecture_class: ArchitectureClass,
    pub size_class: SizeClass,
    pub param_count: u64,
    pub rep_layer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub dataset_id: String,
    pub category: DatasetCategory,
    pub num_classes: usize,
}

/// Models in file order, with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRegistry {
    models: Vec<ModelMeta>,
}

/// Datasets in file order, with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRegistry {
    datasets: Vec<DatasetMeta>,
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::config(what, "empty id"));
        }
        if !seen.insert(id) {
            return Err(Error::config(what, format!("duplicate id `{id}`")));
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

impl ModelRegistry {
    pub fn new(models: Vec<ModelMeta>) -> Result<Self> {
        check_unique(models.iter().map(|m| m.model_id.as_str()), "models")?;
        if models.iter().any(|m| m.param_count == 0) {
            return Err(Error::config("models", "param_count must be positive"));
        }
        Ok(Self { models })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::new(read_json(path)?)
    }

    /// The 64 models of the reference study.
    pub fn builtin() -> Self {
        let models = serde_json::from_str(include_str!("../../data/models.json"))
            .expect("embedded model registry parses");
        Self::new(models).expect("embedded model registry is valid")
    }

    pub fn get(&self, id: &str) -> Result<&ModelMeta> {
        self.models
            .iter()
            .find(|m| m.model_id == id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn models(&self) -> &[ModelMeta] {
        &self.models
    }

    pub fn ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

impl DatasetRegistry {
    pub fn new(datasets: Vec<DatasetMeta>) -> Result<Self> {
        check_unique(datasets.iter().map(|d| d.dataset_id.as_str()), "datasets")?;
        if datasets.iter().any(|d| d.num_classes == 0) {
            return Err(Error::config("datasets", "num_classes must be positive"));
        }
        Ok(Self { datasets })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::new(read_json(path)?)
    }

    /// The 23 evaluation datasets of the reference study.
    pub fn builtin() -> Self {
        let datasets = serde_json::from_str(include_str!("../../data/datasets.json"))
            .expect("embedded dataset registry parses");
        Self::new(datasets).expect("embedded dataset registry is valid")
    }

    pub fn get(&self, id: &str) -> Result<&DatasetMeta> {
        self.datasets
            .iter()
            .find(|d| d.dataset_id == id)
            .ok_or_else(|| Error::UnknownDataset(id.to_string()))
    }

    pub fn datasets(&self) -> &[DatasetMeta] {
        &self.datasets
    }

    pub fn ids(&self) -> Vec<String> {
        self.datasets.iter().map(|d| d.dataset_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }
}
