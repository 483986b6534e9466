//! Similarity vectors and matrices per dataset, and the statistics built on
//! them across datasets.

pub mod aggregate;
pub mod cluster;
pub mod consistency;
pub mod sets;
pub mod similarity;
pub mod stability;
pub mod transform;

pub use aggregate::{aggregate_mean_std, AggregateSimilarity};
pub use cluster::hierarchical_order;
pub use consistency::{
    consistency, consistency_distribution, consistency_matrix, ConsistencyDistribution,
    ConsistencyMatrix, Summary,
};
pub use sets::{build_model_sets, enumerate_pairs, set_pairs, ModelSet, SetSelector};
pub use similarity::{
    dataset_labels, sampled_matrix, similarity_matrix, similarity_vector, EmbeddingSource,
    MemorySource, SimilarityMatrix, SimilarityOptions, SimilarityVector,
};
pub use stability::{
    bootstrap_stability, subsample_convergence, BootstrapReport, ConvergenceStep,
    ConvergenceTable, PairStats,
};
pub use transform::{transform_cka, TransformKind};
