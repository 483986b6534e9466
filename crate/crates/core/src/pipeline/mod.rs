//! Batch front-end: configuration, planning and report emission.

pub mod config;
pub mod plan;
pub mod report;
pub mod run;

pub use config::{Resolved, RunConfig};
pub use plan::{plan, Stage, Task};
pub use run::{execute, RunOptions, RunOutcome, TaskFailure, MANIFEST_FILE};
