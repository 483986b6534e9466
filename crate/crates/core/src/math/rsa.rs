//! Representational dissimilarity matrices and RSA.
//!
//! RDM entries are `1 - pearson(z_i, z_j)` between stimulus rows. Two models
//! are compared by the Spearman correlation of their strict lower triangles,
//! read in row-major order (`(1,0), (2,0), (2,1), (3,0), ...`).

use ndarray::Array2;

use super::cka::{Measure, SimilarityValue};
use super::corr::{average_ranks, Centered};
use super::embedding::EmbeddingMatrix;
use super::kernel::dot;
use super::sum;
use crate::error::{Error, Result, MIN_VARIANCE};

/// Rows centered on their own mean and scaled to unit norm, so that the
/// Pearson correlation of two rows is their dot product.
fn standardized_rows(z: &EmbeddingMatrix) -> Result<Array2<f64>> {
    let p = z.p();
    if p < 2 {
        return Err(Error::RepresentationTooNarrow { p });
    }
    let mut out = z.data().to_owned();
    for (index, mut row) in out.rows_mut().into_iter().enumerate() {
        let m = sum::sum(row.iter().copied()) / p as f64;
        row.mapv_inplace(|v| v - m);
        let ss = sum::sum(row.iter().map(|v| v * v));
        let variance = ss / p as f64;
        if variance.is_nan() || variance <= MIN_VARIANCE {
            return Err(Error::ConstantRow { index, variance });
        }
        let norm = ss.sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

#[inline]
fn dissimilarity(s: &Array2<f64>, i: usize, j: usize) -> f64 {
    (1.0 - dot(s.row(i), s.row(j))).clamp(0.0, 2.0)
}

/// Full `n x n` RDM with zero diagonal.
pub fn rdm_pearson(z: &EmbeddingMatrix) -> Result<Array2<f64>> {
    let s = standardized_rows(z)?;
    let n = z.n();
    let mut d = Array2::zeros((n, n));
    for i in 1..n {
        for j in 0..i {
            let v = dissimilarity(&s, i, j);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Strict lower triangle of a square matrix, row-major.
pub fn lower_triangle(d: &Array2<f64>) -> Vec<f64> {
    let n = d.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 1..n {
        for j in 0..i {
            out.push(d[[i, j]]);
        }
    }
    out
}

/// Ranked, centered RDM triangle of one representation.
#[derive(Debug, Clone)]
pub struct RsaPrepared {
    ranks: Centered,
}

impl RsaPrepared {
    pub fn new(z: &EmbeddingMatrix) -> Result<Self> {
        if z.n() < 3 {
            return Err(Error::InvalidInput(format!(
                "RSA needs n >= 3 stimuli, got {}",
                z.n()
            )));
        }
        let s = standardized_rows(z)?;
        let n = z.n();
        let mut tri = Vec::with_capacity(n * (n - 1) / 2);
        for i in 1..n {
            for j in 0..i {
                tri.push(dissimilarity(&s, i, j));
            }
        }
        Self::from_triangle(&tri)
    }

    /// From an already extracted RDM triangle.
    pub fn from_triangle(tri: &[f64]) -> Result<Self> {
        let first = tri.first().copied();
        if tri.len() < 2 || tri.iter().all(|&v| Some(v) == first) {
            return Err(Error::ConstantRdm);
        }
        Ok(Self {
            ranks: Centered::new(&average_ranks(tri))?,
        })
    }

    pub fn compare(&self, other: &Self) -> Result<SimilarityValue> {
        let r = self.ranks.correlate(&other.ranks)?;
        Ok(SimilarityValue {
            value: r,
            raw: r,
            measure: Measure::RsaSpearman,
        })
    }
}

/// Spearman correlation between the two models' RDM triangles.
pub fn rsa_spearman(zx: &EmbeddingMatrix, zy: &EmbeddingMatrix) -> Result<SimilarityValue> {
    if zx.n() != zy.n() {
        return Err(Error::DimensionMismatch(format!(
            "representations have {} and {} rows",
            zx.n(),
            zy.n()
        )));
    }
    RsaPrepared::new(zx)?.compare(&RsaPrepared::new(zy)?)
}
