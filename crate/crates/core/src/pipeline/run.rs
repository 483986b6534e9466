//! Stage execution.
//!
//! Datasets are processed one after another; within a dataset the models
//! are prepared and compared in parallel. Every result lands in its own
//! file, written in plan order, so outputs do not depend on the number of
//! worker threads.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Resolved;
use super::plan::{consistency_set_pairs, convergence_seeds, Stage, Task};
use super::report::{sort_distributions, write_atomic, write_heatmap, write_json, write_matrix_csv, ColorScale};
use crate::analysis::{
    aggregate_mean_std, bootstrap_stability, consistency_distribution, consistency_matrix,
    dataset_labels, hierarchical_order, similarity_matrix, subsample_convergence, EmbeddingSource,
    ModelSet, SimilarityMatrix, SimilarityOptions,
};
use crate::error::{Error, Result};
use crate::math::Measure;
use crate::probe::{performance_gap_correlation, run_probe_from_store, ProbeResult};
use crate::store::{stratified_subsample, uniform_subsample, SampleIndexSet, Split};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record failing tasks and continue instead of aborting.
    pub allow_partial: bool,
    /// Worker threads, recorded in the manifest only.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task: String,
    pub exit_code: i32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Output files relative to the output directory, in write order.
    pub files: Vec<String>,
    pub failures: Vec<TaskFailure>,
}

/// Keeps ids usable as file names.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.=+".contains(c) { c } else { '_' })
        .collect()
}

struct Ctx<'a> {
    r: &'a Resolved,
    opts: RunOptions,
    out: PathBuf,
    outcome: RunOutcome,
}

impl<'a> Ctx<'a> {
    fn sim_opts(&self) -> SimilarityOptions {
        SimilarityOptions {
            rbf_block: self.r.config.similarity.rbf_block,
        }
    }

    /// Runs `f`; with `allow_partial`, a failure is recorded and skipped.
    fn attempt<T>(&mut self, task: &Task, f: impl FnOnce(&Self) -> Result<T>) -> Result<Option<T>> {
        self.settle(task, f(self))
    }

    fn settle<T>(&mut self, task: &Task, res: Result<T>) -> Result<Option<T>> {
        match res {
            Ok(v) => Ok(Some(v)),
            Err(e) if self.opts.allow_partial => {
                self.outcome.failures.push(TaskFailure {
                    task: task.to_string(),
                    exit_code: e.exit_code(),
                    error: e.to_string(),
                });
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn path(&mut self, rel: &Path) -> PathBuf {
        self.outcome.files.push(rel.to_string_lossy().into_owned());
        self.out.join(rel)
    }

    fn csv(&mut self, rel: PathBuf, corner: &str, rows: &[String], cols: &[String], v: &Array2<f64>) -> Result<()> {
        let p = self.path(&rel);
        write_matrix_csv(&p, corner, rows, cols, v)
    }

    fn json<T: Serialize + ?Sized>(&mut self, rel: PathBuf, value: &T) -> Result<()> {
        let p = self.path(&rel);
        write_json(&p, value)
    }

    fn svg(&mut self, rel: PathBuf, title: &str, labels: &[String], v: &Array2<f64>, scale: ColorScale) -> Result<()> {
        let p = self.path(&rel);
        write_heatmap(&p, title, labels, v, scale)
    }
}

fn scale_for(m: Measure) -> ColorScale {
    if m.is_cka() {
        ColorScale::Unit
    } else {
        ColorScale::Signed
    }
}

/// Shared row sample for every model of a dataset. Checks all models have
/// the same number of rows.
pub fn dataset_sampling(r: &Resolved, dataset: &str, models: &[String], target: usize, seed: u64) -> Result<SampleIndexSet> {
    let n = r.store.embedding(dataset, &models[0])?.matrix.n();
    for m in models {
        let got = r.store.embedding(dataset, m)?.matrix.n();
        if got != n {
            return Err(Error::ShapeMismatch(format!(
                "dataset `{dataset}`: model `{m}` has {got} rows, `{}` has {n}",
                models[0]
            )));
        }
    }
    match dataset_labels(&r.store, dataset, models)? {
        Some(l) => stratified_subsample(&l.labels, target, seed),
        None => uniform_subsample(n, target, seed),
    }
}

#[derive(Debug, Serialize)]
struct AggregateInfo<'a> {
    measure: Measure,
    datasets: Vec<&'a str>,
    clustered_order: &'a [String],
    std_bound_violations: usize,
}

#[derive(Debug, Serialize)]
struct GapRecord {
    dataset: String,
    rho: f64,
}

/// Per measure (config order), the similarity matrices of the datasets that
/// succeeded, in dataset order.
fn run_similarity(ctx: &mut Ctx) -> Result<Vec<Vec<SimilarityMatrix>>> {
    let r = ctx.r;
    let mut mats: Vec<Vec<SimilarityMatrix>> = vec![Vec::new(); r.measures.len()];
    for d in &r.config.datasets {
        for (mi, &m) in r.measures.iter().enumerate() {
            let task = Task::Similarity { measure: m, dataset: d.clone() };
            let res = ctx.attempt(&task, |c| {
                let s = dataset_sampling(r, d, &r.all_models.members, r.config.subsample_for(m), r.config.sampling.seed)?;
                similarity_matrix(&r.store, d, &r.all_models, m, &s, c.sim_opts())
            })?;
            if let Some(mat) = res {
                let dir = PathBuf::from("similarity").join(m.label());
                let stem = file_stem(d);
                ctx.csv(dir.join(format!("{stem}.csv")), "model", &mat.models, &mat.models, &mat.values)?;
                ctx.svg(dir.join(format!("{stem}.svg")), &format!("{m} on {d}"), &mat.models, &mat.values, scale_for(m))?;
                mats[mi].push(mat);
            }
        }
        r.store.evict_dataset(d);
    }
    for (mi, &m) in r.measures.iter().enumerate() {
        if mats[mi].len() < 2 {
            continue;
        }
        let task = Task::Aggregate { measure: m };
        let Some(agg) = ctx.attempt(&task, |_| aggregate_mean_std(&mats[mi]))? else {
            continue;
        };
        let order = hierarchical_order(&agg.mean);
        let models: Vec<String> = order.iter().map(|&i| agg.models[i].clone()).collect();
        let permute = |a: &Array2<f64>| Array2::from_shape_fn(a.raw_dim(), |(i, j)| a[[order[i], order[j]]]);
        let (mean, std) = (permute(&agg.mean), permute(&agg.std));
        let dir = PathBuf::from("similarity").join(m.label()).join("aggregate");
        ctx.csv(dir.join("mean.csv"), "model", &models, &models, &mean)?;
        ctx.csv(dir.join("std.csv"), "model", &models, &models, &std)?;
        ctx.svg(dir.join("mean.svg"), &format!("mean {m}"), &models, &mean, scale_for(m))?;
        let info = AggregateInfo {
            measure: m,
            datasets: mats[mi].iter().map(|x| x.dataset_id.as_str()).collect(),
            clustered_order: &models,
            std_bound_violations: if m.is_cka() { agg.std_bound_violations(1e-9).len() } else { 0 },
        };
        ctx.json(dir.join("aggregate.json"), &info)?;
    }
    Ok(mats)
}

fn run_consistency(ctx: &mut Ctx, mats: &[Vec<SimilarityMatrix>]) -> Result<()> {
    let r = ctx.r;
    for (mi, &m) in r.measures.iter().enumerate() {
        let mut dists = Vec::new();
        for (theta, phi) in consistency_set_pairs(r) {
            let task = Task::Distribution {
                measure: m,
                theta: theta.set_id.clone(),
                phi: phi.set_id.clone(),
            };
            let res = ctx.attempt(&task, |_| {
                let vectors = mats[mi]
                    .iter()
                    .map(|x| x.vector_for(&theta, &phi))
                    .collect::<Result<Vec<_>>>()?;
                let cm = consistency_matrix(&vectors)?;
                let dist = consistency_distribution(&cm)?;
                Ok((cm, dist))
            })?;
            let Some((cm, dist)) = res else { continue };
            let dir = PathBuf::from("consistency").join(m.label());
            let stem = format!("{}__{}", file_stem(&theta.set_id), file_stem(&phi.set_id));
            ctx.csv(dir.join(format!("{stem}.csv")), "dataset", &cm.datasets, &cm.datasets, &cm.rho)?;
            ctx.svg(
                dir.join(format!("{stem}.svg")),
                &format!("{m}: {} x {}", theta.set_id, phi.set_id),
                &cm.datasets,
                &cm.rho,
                ColorScale::Signed,
            )?;
            dists.push(dist);
        }
        sort_distributions(&mut dists);
        ctx.json(PathBuf::from("consistency").join(m.label()).join("distributions.json"), &dists)?;
    }
    Ok(())
}

fn subset(r: &Resolved, members: &Option<Vec<String>>, id: &str) -> Result<ModelSet> {
    match members {
        Some(m) => ModelSet::new(id, m.clone()),
        None => Ok(r.all_models.clone()),
    }
}

fn run_convergence(ctx: &mut Ctx) -> Result<()> {
    let r = ctx.r;
    let models = subset(r, &r.config.convergence.models, "convergence")?;
    for d in &r.config.datasets {
        for &m in &r.measures {
            let mut tables = Vec::new();
            for seed in convergence_seeds(r) {
                let task = Task::Convergence { measure: m, dataset: d.clone(), seed };
                let res = ctx.attempt(&task, |c| {
                    subsample_convergence(&r.store, d, &models, m, &r.config.convergence.per_class_ks, seed, c.sim_opts())
                })?;
                tables.extend(res);
            }
            if !tables.is_empty() {
                let rel = PathBuf::from("convergence").join(m.label()).join(format!("{}.json", file_stem(d)));
                ctx.json(rel, &tables)?;
            }
        }
        r.store.evict_dataset(d);
    }
    Ok(())
}

fn run_bootstrap(ctx: &mut Ctx) -> Result<()> {
    let r = ctx.r;
    let models = subset(r, &r.config.bootstrap.models, "bootstrap")?;
    for d in &r.config.datasets {
        for &m in &r.measures {
            let task = Task::Bootstrap { measure: m, dataset: d.clone() };
            let res = ctx.attempt(&task, |c| {
                let n = r.store.embedding(d, &models.members[0])?.matrix.n();
                let size = r.config.bootstrap.size.unwrap_or_else(|| r.config.subsample_for(m).min(n));
                bootstrap_stability(&r.store, d, &models, m, r.config.bootstrap.iterations, size, r.config.sampling.seed, c.sim_opts())
            })?;
            if let Some(report) = res {
                let rel = PathBuf::from("bootstrap").join(m.label()).join(format!("{}.json", file_stem(d)));
                ctx.json(rel, &report)?;
            }
        }
        r.store.evict_dataset(d);
    }
    Ok(())
}

fn probe_path(dataset: &str, model: &str) -> PathBuf {
    PathBuf::from("probe").join(file_stem(dataset)).join(format!("{}.json", file_stem(model)))
}

fn run_probes(ctx: &mut Ctx) -> Result<()> {
    let r = ctx.r;
    let settings = r.config.probe.search_settings();
    for d in &r.config.datasets {
        let results: Vec<Result<ProbeResult>> = r
            .all_models
            .members
            .par_iter()
            .map(|m| run_probe_from_store(&r.store, m, d, &r.config.probe.seeds, &settings))
            .collect();
        for (m, res) in r.all_models.members.iter().zip(results) {
            let task = Task::Probe { dataset: d.clone(), model: m.clone() };
            if let Some(result) = ctx.settle(&task, res)? {
                ctx.json(probe_path(d, m), &result)?;
            }
        }
        r.store.evict_dataset(d);
    }
    Ok(())
}

fn read_probe(out: &Path, dataset: &str, model: &str) -> Result<ProbeResult> {
    let p = out.join(probe_path(dataset, model));
    let text = std::fs::read_to_string(&p).map_err(|e| {
        Error::io(format!("reading probe result {} (run `probe` first)", p.display()), e)
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: p.display().to_string(),
        source,
    })
}

fn run_gap(ctx: &mut Ctx, mats: &[Vec<SimilarityMatrix>]) -> Result<()> {
    let r = ctx.r;
    for (mi, &m) in r.measures.iter().enumerate() {
        let mut records = Vec::new();
        for mat in &mats[mi] {
            let task = Task::GapCorrelation { measure: m, dataset: mat.dataset_id.clone() };
            let res = ctx.attempt(&task, |c| {
                let results = r
                    .all_models
                    .members
                    .iter()
                    .map(|model| read_probe(&c.out, &mat.dataset_id, model))
                    .collect::<Result<Vec<_>>>()?;
                let sims = mat.vector_for(&r.all_models, &r.all_models)?;
                performance_gap_correlation(&results, &sims)
            })?;
            if let Some(rho) = res {
                records.push(GapRecord { dataset: mat.dataset_id.clone(), rho });
            }
        }
        ctx.json(PathBuf::from("gap_corr").join(format!("{}.json", m.label())), &records)?;
    }
    Ok(())
}

fn run_validate(ctx: &mut Ctx) -> Result<()> {
    let r = ctx.r;
    for d in &r.config.datasets {
        let task = Task::Load { dataset: d.clone() };
        ctx.attempt(&task, |_| {
            dataset_sampling(r, d, &r.all_models.members, 1, 0)?;
            if r.config.probe.enabled {
                for m in &r.all_models.members {
                    r.store.load(d, m, Split::Test)?;
                }
            }
            Ok(())
        })?;
        r.store.evict_dataset(d);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    started_unix: u64,
    finished_unix: u64,
    jobs: usize,
    seed: u64,
    outcome: &'a RunOutcome,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Runs `stage` and writes its outputs plus a timestamped manifest.
pub fn execute(r: &Resolved, stage: Stage, opts: RunOptions) -> Result<RunOutcome> {
    let started = unix_now();
    let mut ctx = Ctx {
        r,
        opts,
        out: r.config.output_dir.clone(),
        outcome: RunOutcome::default(),
    };
    match stage {
        Stage::Validate => run_validate(&mut ctx)?,
        Stage::Sim => {
            run_similarity(&mut ctx)?;
        }
        Stage::Consistency => {
            let mats = run_similarity(&mut ctx)?;
            run_consistency(&mut ctx, &mats)?;
        }
        Stage::Convergence => run_convergence(&mut ctx)?,
        Stage::Bootstrap => run_bootstrap(&mut ctx)?,
        Stage::Probe => run_probes(&mut ctx)?,
        Stage::GapCorr => {
            let mats = run_similarity(&mut ctx)?;
            run_gap(&mut ctx, &mats)?;
        }
        Stage::Report => {
            let mats = run_similarity(&mut ctx)?;
            run_consistency(&mut ctx, &mats)?;
            if r.config.probe.enabled {
                run_probes(&mut ctx)?;
                run_gap(&mut ctx, &mats)?;
            }
        }
    }
    if stage != Stage::Validate {
        let manifest = Manifest {
            command: stage.name(),
            started_unix: started,
            finished_unix: unix_now(),
            jobs: opts.jobs,
            seed: r.config.sampling.seed,
            outcome: &ctx.outcome,
        };
        let bytes = super::report::to_json(&manifest)?;
        write_atomic(&ctx.out.join(MANIFEST_FILE), &bytes)?;
    }
    Ok(ctx.outcome)
}
