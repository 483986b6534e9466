//! Seeded row sampling.
//!
//! Every sampler takes its seed explicitly and builds a fresh
//! `ChaCha8Rng::seed_from_u64(seed)`. ChaCha8 is a counter-based stream
//! cipher with a fixed, platform-independent output, so a given
//! `(input, seed)` yields the same indices on every machine.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SamplingRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SamplingRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Stratified,
    Uniform,
    Bootstrap,
    All,
}

/// Row indices into one dataset, shared by every model evaluated on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleIndexSet {
    pub indices: Vec<usize>,
    pub seed: u64,
    pub kind: SampleKind,
}

impl SampleIndexSet {
    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            seed: 0,
            kind: SampleKind::All,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Per-class quotas for a balanced subsample of `target` rows.
///
/// Each class gets `target / C`; the `target % C` leftover slots go to the
/// largest classes (ties to the smaller label). A class smaller than its
/// quota gives all its rows, and the shortfall is spread over the remaining
/// classes by the same rule.
pub fn class_quotas(sizes: &BTreeMap<usize, usize>, target: usize) -> BTreeMap<usize, usize> {
    let total: usize = sizes.values().sum();
    let target = target.min(total);
    let mut quotas: BTreeMap<usize, usize> = BTreeMap::new();
    // classes ordered by size descending, then label ascending
    let mut active: Vec<usize> = sizes.keys().copied().filter(|c| sizes[c] > 0).collect();
    active.sort_by(|a, b| sizes[b].cmp(&sizes[a]).then(a.cmp(b)));
    let mut capped_total = 0;
    loop {
        let remaining = target - capped_total;
        if active.is_empty() {
            break;
        }
        let base = remaining / active.len();
        let extra = remaining % active.len();
        let proposal: Vec<(usize, usize)> = active
            .iter()
            .enumerate()
            .map(|(rank, &c)| (c, base + usize::from(rank < extra)))
            .collect();
        let capped: Vec<usize> = proposal
            .iter()
            .filter(|&&(c, q)| q >= sizes[&c])
            .map(|&(c, _)| c)
            .collect();
        if capped.is_empty() {
            quotas.extend(proposal);
            break;
        }
        for c in &capped {
            quotas.insert(*c, sizes[c]);
            capped_total += sizes[c];
        }
        active.retain(|c| !capped.contains(c));
    }
    for c in sizes.keys() {
        quotas.entry(*c).or_insert(0);
    }
    quotas
}

/// Class-balanced subsample of `min(target_n, n)` rows, sorted and unique.
pub fn stratified_subsample(labels: &[usize], target_n: usize, seed: u64) -> Result<SampleIndexSet> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if target_n == 0 {
        return Err(Error::InvalidInput("target_n must be positive".into()));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let sizes: BTreeMap<usize, usize> = members.iter().map(|(c, m)| (*c, m.len())).collect();
    let quotas = class_quotas(&sizes, target_n);

    let mut rng = rng(seed);
    let mut indices = Vec::with_capacity(target_n.min(labels.len()));
    for (c, rows) in &members {
        let q = quotas[c];
        if q == rows.len() {
            indices.extend_from_slice(rows);
        } else {
            indices.extend(index::sample(&mut rng, rows.len(), q).iter().map(|k| rows[k]));
        }
    }
    indices.sort_unstable();
    Ok(SampleIndexSet {
        indices,
        seed,
        kind: SampleKind::Stratified,
    })
}

/// Unlabelled fallback: `min(target_n, n)` distinct rows, sorted.
pub fn uniform_subsample(n: usize, target_n: usize, seed: u64) -> Result<SampleIndexSet> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = target_n.min(n);
    let mut indices = if k == n {
        (0..n).collect()
    } else {
        index::sample(&mut rng(seed), n, k).into_vec()
    };
    indices.sort_unstable();
    Ok(SampleIndexSet {
        indices,
        seed,
        kind: SampleKind::Uniform,
    })
}

/// `size` uniform draws with replacement from `0..n`.
pub fn bootstrap_indices(n: usize, size: usize, seed: u64) -> Result<SampleIndexSet> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng(seed);
    Ok(SampleIndexSet {
        indices: (0..size).map(|_| rng.gen_range(0..n)).collect(),
        seed,
        kind: SampleKind::Bootstrap,
    })
}
