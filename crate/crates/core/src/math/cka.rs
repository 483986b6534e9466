//! Centered kernel alignment.
//!
//! Three routes are provided:
//!
//! * [`cka_gram`] works on explicit (possibly uncentered) Gram matrices.
//! * [`cka_linear_feature`] uses `|Yc^T Xc|_F^2 / (|Xc^T Xc|_F |Yc^T Yc|_F)`,
//!   which costs `O(n p^2)` instead of `O(n^2 p)`.
//! * [`cka_rbf_streaming`] evaluates RBF kernels on the fly in row blocks and
//!   never materializes an `n x n` matrix.
//!
//! The per-representation work of the last two routes lives in
//! [`LinearPrepared`] and [`RbfPrepared`], so that a model compared against
//! many others is centered (or has its kernel row sums computed) only once.
//! The one-shot functions are thin wrappers over the prepared types, so the
//! cached and uncached paths give bitwise-identical results.

use std::cmp::Ordering;

use ndarray::Array2;
use rayon::prelude::*;

use super::embedding::EmbeddingMatrix;
use super::kernel::{self, center_gram, rbf_gamma, sq_dist, GramMatrix, KernelSpec};
use super::sum::{self, NeumaierSum};
use crate::error::{Error, Result, MIN_VARIANCE};

/// Which similarity a value was produced by.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    CkaLinear,
    CkaRbf { sigma_frac: f64 },
    RsaSpearman,
}

impl Measure {
    /// Stable name used in file paths and reports, e.g. `cka_rbf_0.2`.
    pub fn label(&self) -> String {
        match self {
            Measure::CkaLinear => "cka_linear".into(),
            Measure::CkaRbf { sigma_frac } => format!("cka_rbf_{sigma_frac}"),
            Measure::RsaSpearman => "rsa_spearman".into(),
        }
    }

    pub fn is_cka(&self) -> bool {
        !matches!(self, Measure::RsaSpearman)
    }

    pub fn kernel(&self) -> Option<KernelSpec> {
        match *self {
            Measure::CkaLinear => Some(KernelSpec::Linear),
            Measure::CkaRbf { sigma_frac } => Some(KernelSpec::Rbf { sigma_frac }),
            Measure::RsaSpearman => None,
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// A similarity score. CKA values are clamped to `[0, 1]`; `raw` keeps the
/// unclamped number for debugging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityValue {
    pub value: f64,
    pub raw: f64,
    pub measure: Measure,
}

impl SimilarityValue {
    pub(crate) fn cka(raw: f64, measure: Measure) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
            measure,
        }
    }
}

fn hsic_scale(n: usize) -> f64 {
    let m = (n - 1) as f64;
    m * m
}

/// Biased HSIC, `sum_ij Kc[i,j] Lc[i,j] / (n-1)^2`, on centered Gram matrices.
pub fn hsic_biased(kc: &GramMatrix, lc: &GramMatrix) -> Result<f64> {
    if kc.n() != lc.n() {
        return Err(Error::DimensionMismatch(format!(
            "Gram matrices are {}x{} and {}x{}",
            kc.n(),
            kc.n(),
            lc.n(),
            lc.n()
        )));
    }
    let total = sum::sum(kc.data.iter().zip(lc.data.iter()).map(|(a, b)| a * b));
    Ok(total / hsic_scale(kc.n()))
}

fn check_self_hsic(h: f64) -> Result<()> {
    if h <= MIN_VARIANCE {
        Err(Error::DegenerateRepresentation { hsic: h })
    } else {
        Ok(())
    }
}

fn measure_for(kernel: KernelSpec) -> Measure {
    match kernel {
        KernelSpec::Linear => Measure::CkaLinear,
        KernelSpec::Rbf { sigma_frac } => Measure::CkaRbf { sigma_frac },
    }
}

/// CKA from two Gram matrices. Uncentered inputs are centered first.
pub fn cka_gram(k: &GramMatrix, l: &GramMatrix) -> Result<SimilarityValue> {
    let centered = |g: &GramMatrix| if g.centered { g.clone() } else { center_gram(g) };
    let (kc, lc) = (centered(k), centered(l));
    let hkk = hsic_biased(&kc, &kc)?;
    let hll = hsic_biased(&lc, &lc)?;
    check_self_hsic(hkk)?;
    check_self_hsic(hll)?;
    let hkl = hsic_biased(&kc, &lc)?;
    Ok(SimilarityValue::cka(
        hkl / (hkk * hll).sqrt(),
        measure_for(k.kernel),
    ))
}

/// Dense reference CKA for two embeddings: builds both Gram matrices.
pub fn cka_dense(
    zx: &EmbeddingMatrix,
    zy: &EmbeddingMatrix,
    spec: KernelSpec,
) -> Result<SimilarityValue> {
    check_same_n(zx, zy)?;
    cka_gram(&kernel::gram(zx, spec)?, &kernel::gram(zy, spec)?)
}

fn check_same_n(zx: &EmbeddingMatrix, zy: &EmbeddingMatrix) -> Result<()> {
    if zx.n() != zy.n() {
        return Err(Error::DimensionMismatch(format!(
            "representations have {} and {} rows",
            zx.n(),
            zy.n()
        )));
    }
    Ok(())
}

/// Column-centered features plus `|Xc^T Xc|_F^2`.
#[derive(Debug, Clone)]
pub struct LinearPrepared {
    centered: Array2<f64>,
    /// `|Xc^T Xc|_F^2`.
    self_sq: f64,
}

impl LinearPrepared {
    pub fn new(z: &EmbeddingMatrix) -> Result<Self> {
        let n = z.n();
        let data = z.data();
        let means: Vec<f64> = data
            .columns()
            .into_iter()
            .map(|c| sum::sum(c.iter().copied()) / n as f64)
            .collect();
        let mut centered = data.clone();
        for mut row in centered.rows_mut() {
            for (v, m) in row.iter_mut().zip(&means) {
                *v -= m;
            }
        }
        let cov = centered.t().dot(&centered);
        let self_sq = sum::sum(cov.iter().map(|v| v * v));
        check_self_hsic(self_sq / hsic_scale(n))?;
        Ok(Self { centered, self_sq })
    }

    pub fn n(&self) -> usize {
        self.centered.nrows()
    }

    /// `|Yc^T Xc|_F^2`. The product is always formed in a canonical
    /// orientation so that swapping the operands gives the identical sum.
    fn cross(&self, other: &Self) -> f64 {
        let (a, b) = match cmp_arrays(&self.centered, &other.centered) {
            Ordering::Greater => (&other.centered, &self.centered),
            _ => (&self.centered, &other.centered),
        };
        let m = a.t().dot(b);
        sum::sum(m.iter().map(|v| v * v))
    }

    pub fn compare(&self, other: &Self) -> Result<SimilarityValue> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch(format!(
                "representations have {} and {} rows",
                self.n(),
                other.n()
            )));
        }
        let raw = self.cross(other) / (self.self_sq * other.self_sq).sqrt();
        Ok(SimilarityValue::cka(raw, Measure::CkaLinear))
    }
}

fn cmp_arrays(a: &Array2<f64>, b: &Array2<f64>) -> Ordering {
    a.dim().cmp(&b.dim()).then_with(|| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Linear CKA through the feature-space identity.
pub fn cka_linear_feature(zx: &EmbeddingMatrix, zy: &EmbeddingMatrix) -> Result<SimilarityValue> {
    check_same_n(zx, zy)?;
    LinearPrepared::new(zx)?.compare(&LinearPrepared::new(zy)?)
}

/// One representation's RBF statistics: bandwidth, kernel row means, grand
/// mean and `sum Kc^2`. Holds a copy of the rows for on-the-fly evaluation.
#[derive(Debug, Clone)]
pub struct RbfPrepared {
    rows: Array2<f64>,
    gamma: f64,
    row_means: Vec<f64>,
    grand_mean: f64,
    self_sum: f64,
    block: usize,
    sigma_frac: f64,
}

/// Evaluates `f(i)` for every row in `0..n`, `block` rows at a time, and
/// returns the per-row results in row order.
fn per_row_blocked<T, F>(n: usize, block: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let block = block.clamp(1, n);
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(block) {
        let end = (start + block).min(n);
        let chunk: Vec<T> = (start..end).into_par_iter().map(&f).collect();
        out.extend(chunk);
    }
    out
}

impl RbfPrepared {
    /// `block` is the number of kernel rows evaluated per step.
    pub fn new(z: &EmbeddingMatrix, sigma_frac: f64, block: usize) -> Result<Self> {
        KernelSpec::rbf(sigma_frac)?;
        if block == 0 {
            return Err(Error::InvalidInput("block size must be positive".into()));
        }
        let gamma = rbf_gamma(z, sigma_frac)?;
        let rows = z.data().to_owned();
        let n = rows.nrows();
        let entry = |i: usize, j: usize| (-gamma * sq_dist(rows.row(i), rows.row(j))).exp();

        // pass 1: row sums of K
        let row_sums = per_row_blocked(n, block, |i| {
            let mut acc = NeumaierSum::new();
            for j in 0..n {
                acc.add(entry(i, j));
            }
            acc.value()
        });
        let row_means: Vec<f64> = row_sums.iter().map(|s| s / n as f64).collect();
        let grand_mean = sum::sum(row_sums.iter().copied()) / (n as f64 * n as f64);

        let mut prepared = Self {
            rows,
            gamma,
            row_means,
            grand_mean,
            self_sum: 0.0,
            block,
            sigma_frac,
        };
        // pass 2 (self term): sum of Kc^2
        let per_row = per_row_blocked(n, block, |i| {
            let mut acc = NeumaierSum::new();
            for j in 0..n {
                let v = prepared.centered_entry(i, j);
                acc.add(v * v);
            }
            acc.value()
        });
        prepared.self_sum = sum::sum(per_row);
        check_self_hsic(prepared.self_sum / hsic_scale(n))?;
        Ok(prepared)
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    #[inline]
    fn centered_entry(&self, i: usize, j: usize) -> f64 {
        let k = (-self.gamma * sq_dist(self.rows.row(i), self.rows.row(j))).exp();
        k - (self.row_means[i] + self.row_means[j]) + self.grand_mean
    }

    /// Cross term `sum Kc Lc`, evaluated blockwise.
    fn cross(&self, other: &Self) -> f64 {
        let n = self.n();
        let block = self.block.min(other.block);
        let per_row = per_row_blocked(n, block, |i| {
            let mut acc = NeumaierSum::new();
            for j in 0..n {
                acc.add(self.centered_entry(i, j) * other.centered_entry(i, j));
            }
            acc.value()
        });
        sum::sum(per_row)
    }

    pub fn compare(&self, other: &Self) -> Result<SimilarityValue> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch(format!(
                "representations have {} and {} rows",
                self.n(),
                other.n()
            )));
        }
        let scale = hsic_scale(self.n());
        let hxy = self.cross(other) / scale;
        let hxx = self.self_sum / scale;
        let hyy = other.self_sum / scale;
        Ok(SimilarityValue::cka(
            hxy / (hxx * hyy).sqrt(),
            Measure::CkaRbf {
                sigma_frac: self.sigma_frac,
            },
        ))
    }
}

/// RBF CKA without materializing Gram matrices. Memory is `O(n p + block)`.
pub fn cka_rbf_streaming(
    zx: &EmbeddingMatrix,
    zy: &EmbeddingMatrix,
    spec: KernelSpec,
    block: usize,
) -> Result<SimilarityValue> {
    let KernelSpec::Rbf { sigma_frac } = spec else {
        return Err(Error::InvalidInput(
            "cka_rbf_streaming needs an RBF kernel spec".into(),
        ));
    };
    check_same_n(zx, zy)?;
    RbfPrepared::new(zx, sigma_frac, block)?.compare(&RbfPrepared::new(zy, sigma_frac, block)?)
}
