//! Linear probes on frozen features, and the link between their accuracy
//! gaps and representational similarity.

pub mod model;
pub mod protocol;
pub mod search;
pub mod train;

pub use model::{evaluate_top1, probe_loss_and_grad, ProbeGrad, ProbeModel};
pub use protocol::{
    performance_gap_correlation, probe_accuracy, run_probe_from_store, run_probe_protocol,
    ProbeResult, SeedResult,
};
pub use search::{
    exhaustive_search, halving_search, hyperparameter_search, lambda_grid, stratified_split,
    GridEval, SearchOutcome, SearchSettings, SearchTrace,
};
pub use train::{cosine_lr, train_probe, ProbeHyperparams};
