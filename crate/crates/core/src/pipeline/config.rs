//! TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every numeric constant of the protocol has a named key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{build_model_sets, ModelSet, SetSelector};
use crate::error::{Error, Result};
use crate::math::{KernelSpec, Measure, DEFAULT_RBF_BLOCK};
use crate::probe::SearchSettings;
use crate::store::{DatasetRegistry, FeatureStore, ModelRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    CkaLinear,
    /// Expanded to one measure per entry of `rbf_sigma_fracs`.
    CkaRbf,
    RsaSpearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityConfig {
    pub measures: Vec<MeasureKind>,
    pub rbf_sigma_fracs: Vec<f64>,
    pub rbf_block: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            measures: vec![MeasureKind::CkaLinear, MeasureKind::CkaRbf],
            rbf_sigma_fracs: vec![0.2, 0.4],
            rbf_block: DEFAULT_RBF_BLOCK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub seed: u64,
    /// Rows kept per dataset for linear CKA.
    pub linear_subsample: usize,
    /// Rows kept per dataset for RBF CKA.
    pub rbf_subsample: usize,
    /// Rows kept per dataset for RSA (RDM memory grows with the square).
    pub rsa_subsample: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            linear_subsample: 10_000,
            rbf_subsample: 30_000,
            rsa_subsample: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSet {
    pub id: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSetConfig {
    /// Any of `all`, `objective`, `architecture`, `training_data`, `size`.
    pub selectors: Vec<String>,
    pub explicit: Vec<ExplicitSet>,
}

impl Default for ModelSetConfig {
    fn default() -> Self {
        Self {
            selectors: vec!["all".into()],
            explicit: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub per_class_ks: Vec<usize>,
    /// Defaults to `[sampling.seed]`.
    pub seeds: Option<Vec<u64>>,
    /// Defaults to every selected model.
    pub models: Option<Vec<String>>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            per_class_ks: vec![1, 5, 10, 20, 30, 40],
            seeds: None,
            models: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub iterations: usize,
    /// Rows per resample; defaults to the measure's subsample size, capped
    /// at the dataset size.
    pub size: Option<usize>,
    pub models: Option<Vec<String>>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            size: None,
            models: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Whether `report` trains probes.
    pub enabled: bool,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub grid_steps: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub learning_rates: Vec<f64>,
    pub validation_fraction: f64,
    pub exhaustive: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let s = SearchSettings::default();
        Self {
            enabled: false,
            seeds: vec![0, 1, 2],
            epochs: s.epochs,
            batch_size: s.batch_size,
            grid_steps: s.grid_steps,
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
            learning_rates: s.learning_rates,
            validation_fraction: s.validation_fraction,
            exhaustive: s.exhaustive,
        }
    }
}

impl ProbeConfig {
    pub fn search_settings(&self) -> SearchSettings {
        SearchSettings {
            learning_rates: self.learning_rates.clone(),
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            grid_steps: self.grid_steps,
            validation_fraction: self.validation_fraction,
            epochs: self.epochs,
            batch_size: self.batch_size,
            exhaustive: self.exhaustive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub feature_root: PathBuf,
    pub output_dir: PathBuf,
    /// JSON model registry; the built-in 64-model registry when absent.
    #[serde(default)]
    pub models_registry: Option<PathBuf>,
    /// JSON dataset registry; the built-in 23-dataset registry when absent.
    #[serde(default)]
    pub datasets_registry: Option<PathBuf>,
    pub datasets: Vec<String>,
    /// Restricts the registry to these models, in this order.
    #[serde(default)]
    pub models: Option<Vec<String>>,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub model_sets: ModelSetConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.feature_root = resolve(base, &cfg.feature_root);
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.models_registry = cfg.models_registry.map(|p| resolve(base, &p));
        cfg.datasets_registry = cfg.datasets_registry.map(|p| resolve(base, &p));
        Ok(cfg)
    }

    /// Concrete measures in config order.
    pub fn measures(&self) -> Result<Vec<Measure>> {
        let mut out = Vec::new();
        for kind in &self.similarity.measures {
            match kind {
                MeasureKind::CkaLinear => out.push(Measure::CkaLinear),
                MeasureKind::RsaSpearman => out.push(Measure::RsaSpearman),
                MeasureKind::CkaRbf => {
                    if self.similarity.rbf_sigma_fracs.is_empty() {
                        return Err(Error::config("similarity.rbf_sigma_fracs", "must not be empty"));
                    }
                    for &f in &self.similarity.rbf_sigma_fracs {
                        KernelSpec::rbf(f)
                            .map_err(|e| Error::config("similarity.rbf_sigma_fracs", e.to_string()))?;
                        out.push(Measure::CkaRbf { sigma_frac: f });
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::config("similarity.measures", "must not be empty"));
        }
        let mut labels: Vec<String> = out.iter().map(Measure::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("similarity.measures", "duplicate measure"));
        }
        Ok(out)
    }

    /// Subsample size used for `measure`.
    pub fn subsample_for(&self, measure: Measure) -> usize {
        match measure {
            Measure::CkaLinear => self.sampling.linear_subsample,
            Measure::CkaRbf { .. } => self.sampling.rbf_subsample,
            Measure::RsaSpearman => self.sampling.rsa_subsample,
        }
    }
}

/// A config with its registries loaded and every id checked.
#[derive(Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub measures: Vec<Measure>,
    /// Selected models in registry (or `models`) order.
    pub all_models: ModelSet,
    pub model_sets: Vec<ModelSet>,
    pub store: FeatureStore,
}

fn check_positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(field, "must be positive"));
    }
    Ok(())
}

fn check_members(field: &str, members: &[String], selected: &ModelSet) -> Result<()> {
    for m in members {
        if !selected.members.contains(m) {
            return Err(Error::config(field, format!("model `{m}` is not selected")));
        }
    }
    Ok(())
}

impl Resolved {
    pub fn new(config: RunConfig) -> Result<Self> {
        let models = match &config.models_registry {
            Some(p) => ModelRegistry::from_json_file(p).map_err(|e| Error::config("models_registry", e.to_string()))?,
            None => ModelRegistry::builtin(),
        };
        let datasets = match &config.datasets_registry {
            Some(p) => DatasetRegistry::from_json_file(p).map_err(|e| Error::config("datasets_registry", e.to_string()))?,
            None => DatasetRegistry::builtin(),
        };
        if config.datasets.is_empty() {
            return Err(Error::config("datasets", "dataset list is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &config.datasets {
            datasets.get(d).map_err(|e| Error::config("datasets", e.to_string()))?;
            if !seen.insert(d) {
                return Err(Error::config("datasets", format!("`{d}` listed twice")));
            }
        }
        // restrict the registry so attribute selectors only see chosen models
        let models = match &config.models {
            Some(ids) => {
                let metas = ids
                    .iter()
                    .map(|id| models.get(id).cloned().map_err(|e| Error::config("models", e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                ModelRegistry::new(metas).map_err(|e| Error::config("models", e.to_string()))?
            }
            None => models,
        };
        let all_models = ModelSet::new("all", models.ids()).map_err(|e| Error::config("models", e.to_string()))?;
        let measures = config.measures()?;
        check_positive("similarity.rbf_block", config.similarity.rbf_block)?;
        check_positive("sampling.linear_subsample", config.sampling.linear_subsample)?;
        check_positive("sampling.rbf_subsample", config.sampling.rbf_subsample)?;
        check_positive("sampling.rsa_subsample", config.sampling.rsa_subsample)?;
        check_positive("bootstrap.iterations", config.bootstrap.iterations)?;
        if let Some(s) = config.bootstrap.size {
            check_positive("bootstrap.size", s)?;
        }
        let ks = &config.convergence.per_class_ks;
        if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "convergence.per_class_ks",
                "must be a non-empty, strictly increasing list of positive integers",
            ));
        }
        for (field, list) in [
            ("convergence.models", &config.convergence.models),
            ("bootstrap.models", &config.bootstrap.models),
        ] {
            if let Some(l) = list {
                check_members(field, l, &all_models)?;
            }
        }
        let p = &config.probe;
        if p.seeds.is_empty() {
            return Err(Error::config("probe.seeds", "must not be empty"));
        }
        check_positive("probe.epochs", p.epochs)?;
        check_positive("probe.batch_size", p.batch_size)?;
        check_positive("probe.grid_steps", p.grid_steps)?;
        if !(p.lambda_min > 0.0 && p.lambda_max >= p.lambda_min && p.lambda_max.is_finite()) {
            return Err(Error::config("probe.lambda_min", "need 0 < lambda_min <= lambda_max"));
        }
        if p.learning_rates.is_empty() || p.learning_rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::config("probe.learning_rates", "need positive, finite rates"));
        }
        if !(p.validation_fraction > 0.0 && p.validation_fraction < 1.0) {
            return Err(Error::config("probe.validation_fraction", "must be in (0, 1)"));
        }

        let mut model_sets = Vec::new();
        for s in &config.model_sets.selectors {
            let sel: SetSelector = s
                .parse()
                .map_err(|e: Error| Error::config("model_sets.selectors", e.to_string()))?;
            model_sets.extend(build_model_sets(&models, &sel).map_err(|e| Error::config("model_sets.selectors", e.to_string()))?);
        }
        for ex in &config.model_sets.explicit {
            let sel = SetSelector::Explicit {
                set_id: ex.id.clone(),
                members: ex.members.clone(),
            };
            model_sets.extend(build_model_sets(&models, &sel).map_err(|e| Error::config("model_sets.explicit", e.to_string()))?);
        }
        if model_sets.is_empty() {
            return Err(Error::config("model_sets", "no model sets selected"));
        }
        let mut ids: Vec<&str> = model_sets.iter().map(|s| s.set_id.as_str()).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config("model_sets", format!("set id `{}` defined twice", w[0])));
        }
        let store = FeatureStore::new(config.feature_root.clone(), models, datasets);
        Ok(Self {
            config,
            measures,
            all_models,
            model_sets,
            store,
        })
    }
}
