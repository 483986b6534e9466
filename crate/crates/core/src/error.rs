use std::path::PathBuf;

use thiserror::Error;

/// Row norms below this are treated as zero rows during L2 normalization.
pub const MIN_ROW_NORM: f64 = 1e-12;
/// Pairwise distances below this count as coincident points.
pub const MIN_DISTANCE: f64 = 1e-15;
/// Variances (and self-HSIC values) at or below this are degenerate.
pub const MIN_VARIANCE: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {index} has norm {norm:e} < {threshold:e}", threshold = MIN_ROW_NORM)]
    ZeroRow { index: usize, norm: f64 },

    #[error("degenerate data: {0} (all pairwise distances below {MIN_DISTANCE:e})")]
    DegenerateData(String),

    #[error("degenerate representation: self-HSIC {hsic:e} <= {MIN_VARIANCE:e}")]
    DegenerateRepresentation { hsic: f64 },

    #[error("row {index} is constant (variance {variance:e} <= {MIN_VARIANCE:e})")]
    ConstantRow { index: usize, variance: f64 },

    #[error("representation has p = {p}; RDMs need at least 2 dimensions")]
    RepresentationTooNarrow { p: usize },

    #[error("RDM triangle has fewer than 2 distinct values")]
    ConstantRdm,

    #[error("vector is constant (variance {variance:e} <= {MIN_VARIANCE:e})")]
    ConstantVector { variance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} at position {index} is outside [0, 1]")]
    OutOfDomain { index: usize, value: f64 },

    #[error("malformed NPY file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("no embedding for model `{model}` on dataset `{dataset}`")]
    MissingEmbedding { model: String, dataset: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown model attribute `{0}`")]
    UnknownAttribute(String),

    #[error("model set is empty or invalid: {0}")]
    EmptyResultSet(String),

    #[error("no valid model pairs between `{theta}` and `{phi}`")]
    NoValidPairs { theta: String, phi: String },

    #[error("model ordering differs between matrices")]
    OrderMismatch,

    #[error("similarity vectors were built over different pair lists")]
    PairListMismatch,

    #[error("{k} samples per class x {classes} classes exceeds the {n} available rows")]
    KTooLarge { k: usize, classes: usize, n: usize },

    #[error("need at least {needed} training samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("probe loss diverged (lr = {learning_rate:e}, weight decay = {weight_decay:e})")]
    NonFiniteLoss { learning_rate: f64, weight_decay: f64 },

    #[error("pair ({a}, {b}): {source}")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: Box<Error>,
    },

    #[error("model `{model}` on dataset `{dataset}`: {source}")]
    Model {
        model: String,
        dataset: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Attach the offending model pair to an error.
    pub fn for_pair(self, a: &str, b: &str) -> Self {
        Error::Pair {
            a: a.to_string(),
            b: b.to_string(),
            source: Box::new(self),
        }
    }

    /// Attach the offending (model, dataset) to an error.
    pub fn for_model(self, model: &str, dataset: &str) -> Self {
        Error::Model {
            model: model.to_string(),
            dataset: dataset.to_string(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } | Error::UnknownAttribute(_) | Error::EmptyResultSet(_) => {
                ErrorClass::Config
            }
            Error::ZeroRow { .. }
            | Error::DegenerateData(_)
            | Error::DegenerateRepresentation { .. }
            | Error::ConstantRow { .. }
            | Error::RepresentationTooNarrow { .. }
            | Error::ConstantRdm
            | Error::ConstantVector { .. }
            | Error::OutOfDomain { .. }
            | Error::NonFiniteLoss { .. } => ErrorClass::Numerical,
            Error::Pair { source, .. } | Error::Model { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}
