use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::meta::enum_name;
use crate::store::{ModelMeta, ModelRegistry};

/// A named group of models (one side of a model-set pair).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSet {
    pub set_id: String,
    pub members: Vec<String>,
    /// `(attribute, value)` the set was selected by, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<(String, String)>,
}

impl ModelSet {
    pub fn new(set_id: impl Into<String>, members: Vec<String>) -> Result<Self> {
        let set_id = set_id.into();
        if members.is_empty() {
            return Err(Error::EmptyResultSet(format!("model set `{set_id}` is empty")));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = members.iter().find(|m| !seen.insert(m.as_str())) {
            return Err(Error::EmptyResultSet(format!(
                "model set `{set_id}` lists `{dup}` twice"
            )));
        }
        Ok(Self {
            set_id,
            members,
            selector: None,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// How to split a registry into model sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetSelector {
    Objective,
    Architecture,
    TrainingData,
    Size,
    All,
    Explicit { set_id: String, members: Vec<String> },
}

impl SetSelector {
    pub fn attribute_name(&self) -> &str {
        match self {
            SetSelector::Objective => "objective",
            SetSelector::Architecture => "architecture",
            SetSelector::TrainingData => "training_data",
            SetSelector::Size => "size",
            SetSelector::All => "all",
            SetSelector::Explicit { .. } => "explicit",
        }
    }

    fn value_of(&self, m: &ModelMeta) -> Option<String> {
        match self {
            SetSelector::Objective => Some(enum_name(&m.objective)),
            SetSelector::Architecture => Some(enum_name(&m.architecture_class)),
            SetSelector::TrainingData => Some(enum_name(&m.training_data_class)),
            SetSelector::Size => Some(enum_name(&m.size_class)),
            _ => None,
        }
    }
}

impl FromStr for SetSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "objective" => Ok(SetSelector::Objective),
            "architecture" => Ok(SetSelector::Architecture),
            "training_data" => Ok(SetSelector::TrainingData),
            "size" => Ok(SetSelector::Size),
            "all" => Ok(SetSelector::All),
            other => Err(Error::UnknownAttribute(other.to_string())),
        }
    }
}

/// Partitions the registry by an attribute, or returns the single "all" /
/// explicit set. Members keep registry order; attribute sets are ordered by
/// attribute value.
pub fn build_model_sets(registry: &ModelRegistry, selector: &SetSelector) -> Result<Vec<ModelSet>> {
    if registry.is_empty() {
        return Err(Error::EmptyResultSet("model registry is empty".into()));
    }
    match selector {
        SetSelector::All => Ok(vec![ModelSet::new("all", registry.ids())?]),
        SetSelector::Explicit { set_id, members } => {
            for m in members {
                registry.get(m)?;
            }
            Ok(vec![ModelSet::new(set_id.clone(), members.clone())?])
        }
        _ => {
            let attribute = selector.attribute_name();
            let mut groups: BTreeMap<_, Vec<String>> = BTreeMap::new();
            for m in registry.models() {
                let key = match selector {
                    SetSelector::Objective => m.objective as u8,
                    SetSelector::Architecture => m.architecture_class as u8,
                    SetSelector::TrainingData => m.training_data_class as u8,
                    SetSelector::Size => m.size_class as u8,
                    _ => unreachable!(),
                };
                groups
                    .entry((key, selector.value_of(m).unwrap()))
                    .or_default()
                    .push(m.model_id.clone());
            }
            groups
                .into_iter()
                .map(|((_, value), members)| {
                    let mut set = ModelSet::new(format!("{attribute}={value}"), members)?;
                    set.selector = Some((attribute.to_string(), value));
                    Ok(set)
                })
                .collect()
        }
    }
}

/// Canonical pair list: every unordered `{a, b}` with `a` in theta, `b` in
/// phi and `a != b`, once, as `(min, max)` by model id, sorted.
pub fn enumerate_pairs(theta: &ModelSet, phi: &ModelSet) -> Result<Vec<(String, String)>> {
    let mut pairs = BTreeSet::new();
    for a in &theta.members {
        for b in &phi.members {
            match a.cmp(b) {
                std::cmp::Ordering::Less => pairs.insert((a.clone(), b.clone())),
                std::cmp::Ordering::Greater => pairs.insert((b.clone(), a.clone())),
                std::cmp::Ordering::Equal => false,
            };
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoValidPairs {
            theta: theta.set_id.clone(),
            phi: phi.set_id.clone(),
        });
    }
    Ok(pairs.into_iter().collect())
}

/// Unordered model-set pairs `(theta, phi)` with `theta <= phi` in list order.
pub fn set_pairs(sets: &[ModelSet]) -> Vec<(ModelSet, ModelSet)> {
    let mut out = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i..] {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}
