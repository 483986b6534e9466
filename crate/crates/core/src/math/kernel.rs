use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingMatrix;
use super::sum;
use crate::error::{Error, Result, MIN_DISTANCE};

/// Above this many rows the bandwidth median is estimated from a subsample.
pub const EXACT_MEDIAN_MAX_N: usize = 4096;
/// Number of sampled pairs for the subsampled median (2^22).
pub const MEDIAN_SAMPLE_PAIRS: usize = 1 << 22;
const MEDIAN_SEED: u64 = 0x6d65_6469_616e_5f70;

/// Kernel used to build Gram matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    /// Gaussian kernel with bandwidth `sigma_frac` times the median pairwise distance.
    Rbf { sigma_frac: f64 },
}

impl KernelSpec {
    pub fn rbf(sigma_frac: f64) -> Result<Self> {
        if !(sigma_frac > 0.0 && sigma_frac.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma_frac must be a positive finite number, got {sigma_frac}"
            )));
        }
        Ok(KernelSpec::Rbf { sigma_frac })
    }
}

/// An `n x n` kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub data: Array2<f64>,
    pub centered: bool,
    pub kernel: KernelSpec,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }
}

#[inline]
pub(crate) fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance, summed coordinate by coordinate.
///
/// Computed from differences rather than `|a|^2 + |b|^2 - 2ab` so that it is
/// exactly symmetric and exactly zero on the diagonal.
#[inline]
pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => sq_dist_slice(a, b),
        _ => sq_dist_slice(&a.to_vec(), &b.to_vec()),
    }
}

/// Four interleaved partial sums, combined in a fixed order.
fn sq_dist_slice(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `K = Z Z^T`.
pub fn gram_linear(z: &EmbeddingMatrix) -> GramMatrix {
    let n = z.n();
    let mut data = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = dot(z.row(i), z.row(j));
            data[[i, j]] = v;
            data[[j, i]] = v;
        }
    }
    GramMatrix {
        data,
        centered: false,
        kernel: KernelSpec::Linear,
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if len % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of all `n(n-1)/2` pairwise Euclidean distances.
///
/// For `n > 4096` the median is taken over `2^22` pairs drawn uniformly
/// (with a fixed seed) instead of all pairs.
pub fn median_pairwise_distance(z: &EmbeddingMatrix) -> Result<f64> {
    let n = z.n();
    let mut distances = if n <= EXACT_MEDIAN_MAX_N {
        let mut d = Vec::with_capacity(n * (n - 1) / 2);
        for i in 1..n {
            for j in 0..i {
                d.push(sq_dist(z.row(i), z.row(j)).sqrt());
            }
        }
        d
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SEED);
        (0..MEDIAN_SAMPLE_PAIRS)
            .map(|_| {
                let i = rng.gen_range(0..n);
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                sq_dist(z.row(i), z.row(j)).sqrt()
            })
            .collect()
    };
    let median = median_of(&mut distances);
    if median < MIN_DISTANCE {
        return Err(Error::DegenerateData(format!(
            "median pairwise distance is {median:e}"
        )));
    }
    Ok(median)
}

/// The `1 / (2 sigma^2)` factor of the RBF kernel for this matrix.
pub(crate) fn rbf_gamma(z: &EmbeddingMatrix, sigma_frac: f64) -> Result<f64> {
    let sigma = sigma_frac * median_pairwise_distance(z)?;
    Ok(1.0 / (2.0 * sigma * sigma))
}

/// Gaussian Gram matrix, `K[i,j] = exp(-|z_i - z_j|^2 / (2 sigma^2))`.
pub fn gram_rbf(z: &EmbeddingMatrix, spec: KernelSpec) -> Result<GramMatrix> {
    let KernelSpec::Rbf { sigma_frac } = spec else {
        return Err(Error::InvalidInput("gram_rbf needs an RBF kernel spec".into()));
    };
    let spec = KernelSpec::rbf(sigma_frac)?;
    let gamma = rbf_gamma(z, sigma_frac)?;
    let n = z.n();
    let mut data = Array2::zeros((n, n));
    for i in 0..n {
        data[[i, i]] = 1.0;
        for j in 0..i {
            let v = (-gamma * sq_dist(z.row(i), z.row(j))).exp();
            data[[i, j]] = v;
            data[[j, i]] = v;
        }
    }
    Ok(GramMatrix {
        data,
        centered: false,
        kernel: spec,
    })
}

/// Builds the Gram matrix for any kernel kind.
pub fn gram(z: &EmbeddingMatrix, spec: KernelSpec) -> Result<GramMatrix> {
    match spec {
        KernelSpec::Linear => Ok(gram_linear(z)),
        KernelSpec::Rbf { .. } => gram_rbf(z, spec),
    }
}

/// Double centering, `HKH` with `H = I - 11^T / n`.
pub fn center_gram(k: &GramMatrix) -> GramMatrix {
    let n = k.n();
    if n == 0 {
        return GramMatrix { centered: true, ..k.clone() };
    }
    // centering ignores a constant shift; removing one entry first makes a
    // constant kernel exactly zero
    let pivot = k.data[[0, 0]];
    let row_means: Vec<f64> = k
        .data
        .rows()
        .into_iter()
        .map(|r| sum::sum(r.iter().map(|&v| v - pivot)) / n as f64)
        .collect();
    let grand = sum::mean(&row_means);
    let mut data = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            // (m_i + m_j) commutes, keeping the output exactly symmetric
            data[[i, j]] = (k.data[[i, j]] - pivot) - (row_means[i] + row_means[j]) + grand;
        }
    }
    GramMatrix {
        data,
        centered: true,
        kernel: k.kernel,
    }
}
