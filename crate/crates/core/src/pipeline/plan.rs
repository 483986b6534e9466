use std::fmt;

use super::config::Resolved;
use crate::analysis::{enumerate_pairs, set_pairs, ModelSet};
use crate::math::Measure;

/// What a run should produce. Later stages include the work of the stages
/// they depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Sim,
    Consistency,
    Convergence,
    Bootstrap,
    Probe,
    GapCorr,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Sim => "sim",
            Stage::Consistency => "consistency",
            Stage::Convergence => "convergence",
            Stage::Bootstrap => "bootstrap",
            Stage::Probe => "probe",
            Stage::GapCorr => "gap-corr",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Load { dataset: String },
    Similarity { measure: Measure, dataset: String },
    Aggregate { measure: Measure },
    Consistency { measure: Measure, theta: String, phi: String, a: String, b: String },
    Distribution { measure: Measure, theta: String, phi: String },
    Convergence { measure: Measure, dataset: String, seed: u64 },
    Bootstrap { measure: Measure, dataset: String },
    Probe { dataset: String, model: String },
    GapCorrelation { measure: Measure, dataset: String },
    Report,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Load { dataset } => write!(f, "load {dataset}"),
            Task::Similarity { measure, dataset } => write!(f, "similarity {measure} {dataset}"),
            Task::Aggregate { measure } => write!(f, "aggregate {measure}"),
            Task::Consistency { measure, theta, phi, a, b } => {
                write!(f, "consistency {measure} [{theta} x {phi}] {a} ~ {b}")
            }
            Task::Distribution { measure, theta, phi } => {
                write!(f, "distribution {measure} [{theta} x {phi}]")
            }
            Task::Convergence { measure, dataset, seed } => {
                write!(f, "convergence {measure} {dataset} seed={seed}")
            }
            Task::Bootstrap { measure, dataset } => write!(f, "bootstrap {measure} {dataset}"),
            Task::Probe { dataset, model } => write!(f, "probe {model} {dataset}"),
            Task::GapCorrelation { measure, dataset } => write!(f, "gap-corr {measure} {dataset}"),
            Task::Report => write!(f, "report"),
        }
    }
}

/// Model-set pairs with at least two valid model pairs, the minimum for a
/// correlation across datasets.
pub fn consistency_set_pairs(r: &Resolved) -> Vec<(ModelSet, ModelSet)> {
    set_pairs(&r.model_sets)
        .into_iter()
        .filter(|(t, p)| enumerate_pairs(t, p).is_ok_and(|v| v.len() >= 2))
        .collect()
}

pub fn convergence_seeds(r: &Resolved) -> Vec<u64> {
    r.config
        .convergence
        .seeds
        .clone()
        .unwrap_or_else(|| vec![r.config.sampling.seed])
}

fn push_similarity(r: &Resolved, tasks: &mut Vec<Task>) {
    for d in &r.config.datasets {
        tasks.push(Task::Load { dataset: d.clone() });
        for &m in &r.measures {
            tasks.push(Task::Similarity { measure: m, dataset: d.clone() });
        }
    }
    if r.config.datasets.len() >= 2 {
        for &m in &r.measures {
            tasks.push(Task::Aggregate { measure: m });
        }
    }
}

fn push_consistency(r: &Resolved, tasks: &mut Vec<Task>) {
    let ds = &r.config.datasets;
    for &m in &r.measures {
        for (theta, phi) in consistency_set_pairs(r) {
            for i in 0..ds.len() {
                for j in i + 1..ds.len() {
                    tasks.push(Task::Consistency {
                        measure: m,
                        theta: theta.set_id.clone(),
                        phi: phi.set_id.clone(),
                        a: ds[i].clone(),
                        b: ds[j].clone(),
                    });
                }
            }
            tasks.push(Task::Distribution {
                measure: m,
                theta: theta.set_id.clone(),
                phi: phi.set_id.clone(),
            });
        }
    }
}

fn push_probe(r: &Resolved, tasks: &mut Vec<Task>) {
    for d in &r.config.datasets {
        for m in &r.all_models.members {
            tasks.push(Task::Probe { dataset: d.clone(), model: m.clone() });
        }
    }
}

fn push_gap(r: &Resolved, tasks: &mut Vec<Task>) {
    for &m in &r.measures {
        for d in &r.config.datasets {
            tasks.push(Task::GapCorrelation { measure: m, dataset: d.clone() });
        }
    }
}

/// Ordered task list for `stage`: loads, similarities, aggregates,
/// consistency, distributions, probes, then reports.
pub fn plan(r: &Resolved, stage: Stage) -> Vec<Task> {
    let mut tasks = Vec::new();
    match stage {
        Stage::Validate => {
            for d in &r.config.datasets {
                tasks.push(Task::Load { dataset: d.clone() });
            }
        }
        Stage::Sim => push_similarity(r, &mut tasks),
        Stage::Consistency => {
            push_similarity(r, &mut tasks);
            push_consistency(r, &mut tasks);
        }
        Stage::Convergence => {
            for d in &r.config.datasets {
                tasks.push(Task::Load { dataset: d.clone() });
                for &m in &r.measures {
                    for seed in convergence_seeds(r) {
                        tasks.push(Task::Convergence { measure: m, dataset: d.clone(), seed });
                    }
                }
            }
        }
        Stage::Bootstrap => {
            for d in &r.config.datasets {
                tasks.push(Task::Load { dataset: d.clone() });
                for &m in &r.measures {
                    tasks.push(Task::Bootstrap { measure: m, dataset: d.clone() });
                }
            }
        }
        Stage::Probe => push_probe(r, &mut tasks),
        Stage::GapCorr => {
            push_similarity(r, &mut tasks);
            push_gap(r, &mut tasks);
        }
        Stage::Report => {
            push_similarity(r, &mut tasks);
            push_consistency(r, &mut tasks);
            if r.config.probe.enabled {
                push_probe(r, &mut tasks);
                push_gap(r, &mut tasks);
            }
        }
    }
    if stage != Stage::Validate {
        tasks.push(Task::Report);
    }
    tasks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::RunConfig;
    use crate::store::DatasetRegistry;

    fn resolved(n_datasets: usize, selectors: &[&str]) -> Resolved {
        let ids = DatasetRegistry::builtin().ids();
        let mut c = RunConfig::from_toml("feature_root = \"f\"\noutput_dir = \"o\"\ndatasets = []\n[similarity]\nmeasures = [\"cka_linear\"]\n").unwrap();
        c.datasets = ids[..n_datasets].to_vec();
        c.model_sets.selectors = selectors.iter().map(|s| s.to_string()).collect();
        Resolved::new(c).unwrap()
    }

    fn count(tasks: &[Task], f: impl Fn(&Task) -> bool) -> usize {
        tasks.iter().filter(|t| f(t)).count()
    }

    #[test]
    fn one_consistency_task_for_two_datasets() {
        let t = plan(&resolved(2, &["all"]), Stage::Consistency);
        assert_eq!(count(&t, |t| matches!(t, Task::Consistency { .. })), 1);
        assert_eq!(count(&t, |t| matches!(t, Task::Distribution { .. })), 1);
        assert_eq!(t.last(), Some(&Task::Report));
    }

    #[test]
    fn twenty_three_datasets_give_253_tasks() {
        let t = plan(&resolved(23, &["all"]), Stage::Consistency);
        assert_eq!(count(&t, |t| matches!(t, Task::Consistency { .. })), 253);
    }

    #[test]
    fn attribute_set_pairs() {
        // objective: 3 sets -> 6 unordered set pairs, all with valid pairs
        let r = resolved(3, &["objective"]);
        assert_eq!(consistency_set_pairs(&r).len(), 6);
        let t = plan(&r, Stage::Consistency);
        assert_eq!(count(&t, |t| matches!(t, Task::Consistency { .. })), 6 * 3);
    }

    #[test]
    fn stage_order() {
        let t = plan(&resolved(2, &["all"]), Stage::Report);
        let pos = |f: &dyn Fn(&Task) -> bool| t.iter().position(f).unwrap();
        assert!(pos(&|t| matches!(t, Task::Load { .. })) < pos(&|t| matches!(t, Task::Similarity { .. })));
        assert!(pos(&|t| matches!(t, Task::Aggregate { .. })) < pos(&|t| matches!(t, Task::Consistency { .. })));
        assert!(pos(&|t| matches!(t, Task::Consistency { .. })) < pos(&|t| matches!(t, Task::Distribution { .. })));
        assert_eq!(plan(&resolved(2, &["all"]), Stage::Validate).len(), 2);
    }
}
