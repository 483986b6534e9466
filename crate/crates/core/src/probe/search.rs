//! Weight-decay search over a log-spaced grid.

use std::collections::BTreeMap;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::evaluate_top1;
use super::train::{train_probe, ProbeHyperparams};
use crate::error::{Error, Result};
use crate::store::sampling::rng;

/// Spacing of the coarse sweep, in grid steps.
pub const COARSE_STRIDE: usize = 8;

/// `steps` log-spaced values from `min` to `max`, both included.
pub fn lambda_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    let (lo, hi) = (min.log10(), max.log10());
    (0..steps)
        .map(|i| {
            if i == steps - 1 {
                max
            } else {
                10f64.powf(lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            }
        })
        .collect()
}

/// Grid indices in the order they were evaluated, with their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub evaluated: Vec<(usize, f64)>,
    pub best: usize,
    pub best_score: f64,
}

struct Tracker<F> {
    eval: F,
    scores: BTreeMap<usize, f64>,
    trace: Vec<(usize, f64)>,
    best: Option<(usize, f64)>,
}

impl<F: FnMut(usize) -> Result<f64>> Tracker<F> {
    fn visit(&mut self, i: usize) -> Result<()> {
        if self.scores.contains_key(&i) {
            return Ok(());
        }
        let s = (self.eval)(i)?;
        self.scores.insert(i, s);
        self.trace.push((i, s));
        // ties go to the smaller index
        let better = match self.best {
            None => true,
            Some((b, bs)) => s > bs || (s == bs && i < b),
        };
        if better {
            self.best = Some((i, s));
        }
        Ok(())
    }

    fn finish(self) -> SearchTrace {
        let (best, best_score) = self.best.expect("at least one grid point evaluated");
        SearchTrace {
            evaluated: self.trace,
            best,
            best_score,
        }
    }
}

/// Coarse sweep over every [`COARSE_STRIDE`]-th grid index, then repeated
/// halving: at step sizes 4, 2, 1 the untested points `best +- step` are
/// evaluated until the best stops moving. Ends with both grid neighbors of
/// the best evaluated.
pub fn halving_search<F: FnMut(usize) -> Result<f64>>(len: usize, eval: F) -> Result<SearchTrace> {
    if len == 0 {
        return Err(Error::config("grid_steps", "grid is empty"));
    }
    let mut t = Tracker {
        eval,
        scores: BTreeMap::new(),
        trace: Vec::new(),
        best: None,
    };
    for i in (0..len).step_by(COARSE_STRIDE) {
        t.visit(i)?;
    }
    let mut step = COARSE_STRIDE / 2;
    while step >= 1 {
        loop {
            let b = t.best.unwrap().0;
            if b >= step {
                t.visit(b - step)?;
            }
            if b + step < len {
                t.visit(b + step)?;
            }
            if t.best.unwrap().0 == b {
                break;
            }
        }
        step /= 2;
    }
    Ok(t.finish())
}

/// Evaluates every grid point.
pub fn exhaustive_search<F: FnMut(usize) -> Result<f64>>(len: usize, eval: F) -> Result<SearchTrace> {
    if len == 0 {
        return Err(Error::config("grid_steps", "grid is empty"));
    }
    let mut t = Tracker {
        eval,
        scores: BTreeMap::new(),
        trace: Vec::new(),
        best: None,
    };
    for i in 0..len {
        t.visit(i)?;
    }
    Ok(t.finish())
}

/// Stratified train/validation split. Each class sends the floor of its
/// share to validation; the rows still missing from the rounded total go to
/// the classes with the largest remainders (ties to the smaller label).
/// Returns sorted `(train, validation)` indices.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let target = (labels.len() as f64 * fraction).round() as usize;
    let mut quota: BTreeMap<usize, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for (&c, rows) in &members {
        let exact = rows.len() as f64 * fraction;
        quota.insert(c, exact.floor() as usize);
        remainders.push((exact - exact.floor(), c));
    }
    let mut left = target.saturating_sub(quota.values().sum());
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, c) in remainders {
        if left == 0 {
            break;
        }
        if quota[&c] < members[&c].len() {
            *quota.get_mut(&c).unwrap() += 1;
            left -= 1;
        }
    }
    let mut rng = rng(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (c, mut rows) in members {
        rows.shuffle(&mut rng);
        let q = quota[&c];
        val.extend_from_slice(&rows[..q]);
        train.extend_from_slice(&rows[q..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub learning_rates: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub grid_steps: usize,
    pub validation_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Evaluate the whole grid instead of the halving search.
    pub exhaustive: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-1, 1e-2, 1e-3, 1e-4],
            lambda_min: 1e-6,
            lambda_max: 1e2,
            grid_steps: 96,
            validation_fraction: 0.2,
            epochs: 20,
            batch_size: 1024,
            exhaustive: false,
        }
    }
}

/// One validation run of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEval {
    pub learning_rate: f64,
    pub grid_index: usize,
    pub weight_decay: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub chosen: ProbeHyperparams,
    pub val_top1: f64,
    pub trace: Vec<GridEval>,
}

/// Picks `(learning rate, weight decay)` by validation top-1 on a held-out
/// stratified share of the training rows. Each learning rate is searched
/// independently; ties prefer the smaller weight decay, then the smaller
/// learning rate.
pub fn hyperparameter_search(
    x: ArrayView2<f64>,
    y: &[usize],
    classes: usize,
    seed: u64,
    settings: &SearchSettings,
) -> Result<SearchOutcome> {
    if y.len() < 5 * classes {
        return Err(Error::TooFewSamples {
            needed: 5 * classes,
            got: y.len(),
        });
    }
    if settings.learning_rates.is_empty() {
        return Err(Error::config("probe.learning_rates", "must not be empty"));
    }
    let grid = lambda_grid(settings.lambda_min, settings.lambda_max, settings.grid_steps);
    let (train_idx, val_idx) = stratified_split(y, settings.validation_fraction, seed);
    let xt = x.select(Axis(0), &train_idx);
    let yt: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let xv = x.select(Axis(0), &val_idx);
    let yv: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();

    let hp = |lr: f64, wd: f64| ProbeHyperparams {
        learning_rate: lr,
        weight_decay: wd,
        epochs: settings.epochs,
        batch_size: settings.batch_size,
        seed,
    };
    let per_lr = settings
        .learning_rates
        .par_iter()
        .map(|&lr| {
            let eval = |i: usize| -> Result<f64> {
                let m = train_probe(xt.view(), &yt, classes, &hp(lr, grid[i]))?;
                Ok(evaluate_top1(&m, xv.view(), &yv))
            };
            let trace = if settings.exhaustive {
                exhaustive_search(grid.len(), eval)?
            } else {
                halving_search(grid.len(), eval)?
            };
            Ok((lr, trace))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(f64, f64, f64)> = None; // (score, lambda, lr)
    let mut trace = Vec::new();
    for (lr, t) in &per_lr {
        let cand = (t.best_score, grid[t.best], *lr);
        let better = match best {
            None => true,
            Some((s, l, r)) => {
                cand.0 > s || (cand.0 == s && (cand.1 < l || (cand.1 == l && cand.2 < r)))
            }
        };
        if better {
            best = Some(cand);
        }
        trace.extend(t.evaluated.iter().map(|&(i, s)| GridEval {
            learning_rate: *lr,
            grid_index: i,
            weight_decay: grid[i],
            val_top1: s,
        }));
    }
    let (val_top1, wd, lr) = best.unwrap();
    Ok(SearchOutcome {
        chosen: hp(lr, wd),
        val_top1,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_shape() {
        let g = lambda_grid(1e-6, 1e2, 96);
        assert_eq!(g.len(), 96);
        assert_eq!(g[0], 1e-6);
        assert_eq!(g[95], 1e2);
        let r0 = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r0).abs() < 1e-12);
        }
    }

    /// Strictly unimodal curve with its peak at `peak`.
    fn unimodal(peak: usize, left: f64, right: f64) -> impl Fn(usize) -> f64 {
        move |i| {
            if i <= peak {
                -(left * (peak - i) as f64)
            } else {
                -(right * (i - peak) as f64)
            }
        }
    }

    #[test]
    fn halving_finds_every_peak() {
        for peak in 0..96 {
            let f = unimodal(peak, 0.3, 1.7);
            let t = halving_search(96, |i| Ok(f(i))).unwrap();
            assert_eq!(t.best, peak);
            assert!(t.evaluated.len() < 30, "{} evals", t.evaluated.len());
        }
    }

    proptest! {
        #[test]
        fn halving_equals_exhaustive_on_unimodal(peak in 0usize..96, l in 0.01f64..5.0, r in 0.01f64..5.0, len in 1usize..120) {
            let peak = peak.min(len - 1);
            let f = unimodal(peak, l, r);
            let a = halving_search(len, |i| Ok(f(i))).unwrap();
            let b = exhaustive_search(len, |i| Ok(f(i))).unwrap();
            prop_assert_eq!(a.best, b.best);
            prop_assert_eq!(a.best_score, b.best_score);
        }
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let t = exhaustive_search(10, |_| Ok(0.5)).unwrap();
        assert_eq!(t.best, 0);
        let t = halving_search(10, |i| Ok(if i >= 4 { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(t.best, 4);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..103).map(|i| i % 4).collect();
        let (tr, va) = stratified_split(&labels, 0.2, 3);
        assert_eq!(va.len(), 21);
        assert_eq!(tr.len() + va.len(), 103);
        let mut all: Vec<_> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for c in 0..4 {
            let k = va.iter().filter(|&&i| labels[i] == c).count();
            assert!((5..=6).contains(&k));
        }
        assert_eq!(stratified_split(&labels, 0.2, 3), (tr, va));
    }

    #[test]
    fn too_few_samples() {
        let x = ndarray::Array2::zeros((9, 2));
        let y = vec![0, 1, 0, 1, 0, 1, 0, 1, 0];
        assert!(matches!(
            hyperparameter_search(x.view(), &y, 2, 0, &SearchSettings::default()),
            Err(Error::TooFewSamples { needed: 10, got: 9 })
        ));
    }
}
