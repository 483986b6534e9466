//! Kernel statistics and correlation primitives.
//!
//! Everything here is a pure function of its inputs. Long reductions use
//! compensated summation in a fixed order, so results do not depend on the
//! number of worker threads.

pub mod cka;
pub mod corr;
pub mod embedding;
pub mod kernel;
pub mod rsa;
pub mod sum;

pub use cka::{
    cka_dense, cka_gram, cka_linear_feature, cka_rbf_streaming, hsic_biased, LinearPrepared,
    Measure, RbfPrepared, SimilarityValue,
};
pub use corr::{average_ranks, pearson, spearman};
pub use embedding::{l2_normalize, EmbeddingMatrix};
pub use kernel::{
    center_gram, gram, gram_linear, gram_rbf, median_pairwise_distance, GramMatrix, KernelSpec,
};
pub use rsa::{lower_triangle, rdm_pearson, rsa_spearman, RsaPrepared};

use crate::error::Result;

/// Default number of kernel rows evaluated per block on the streaming RBF path.
pub const DEFAULT_RBF_BLOCK: usize = 256;

/// Per-representation state for one measure.
#[derive(Debug, Clone)]
pub enum Prepared {
    Linear(LinearPrepared),
    Rbf(RbfPrepared),
    Rsa(RsaPrepared),
}

impl Prepared {
    pub fn new(measure: Measure, z: &EmbeddingMatrix, rbf_block: usize) -> Result<Self> {
        Ok(match measure {
            Measure::CkaLinear => Prepared::Linear(LinearPrepared::new(z)?),
            Measure::CkaRbf { sigma_frac } => {
                Prepared::Rbf(RbfPrepared::new(z, sigma_frac, rbf_block)?)
            }
            Measure::RsaSpearman => Prepared::Rsa(RsaPrepared::new(z)?),
        })
    }

    pub fn compare(&self, other: &Self) -> Result<SimilarityValue> {
        match (self, other) {
            (Prepared::Linear(a), Prepared::Linear(b)) => a.compare(b),
            (Prepared::Rbf(a), Prepared::Rbf(b)) => a.compare(b),
            (Prepared::Rsa(a), Prepared::Rsa(b)) => a.compare(b),
            _ => Err(crate::Error::InvalidInput(
                "cannot compare representations prepared for different measures".into(),
            )),
        }
    }
}

/// Similarity of two representations under `measure`, with no caching.
pub fn similarity(
    measure: Measure,
    zx: &EmbeddingMatrix,
    zy: &EmbeddingMatrix,
    rbf_block: usize,
) -> Result<SimilarityValue> {
    Prepared::new(measure, zx, rbf_block)?.compare(&Prepared::new(measure, zy, rbf_block)?)
}
