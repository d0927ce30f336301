use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("non-numeric value `{value}` at line {line}")]
    NonNumeric { value: String, line: u64 },

    #[error("binary variable `{variable}` has value {value} (must be 0 or 1)")]
    BinaryDomainViolation { variable: String, value: f64 },

    #[error("time index {index} out of range (T = {time_points})")]
    OutOfRange { index: usize, time_points: usize },

    #[error("duplicate cell for subject `{subject}`, variable `{variable}`, time {time}")]
    DuplicateCell {
        subject: String,
        variable: String,
        time: usize,
    },

    #[error("no complete subjects remain after ingestion ({dropped} dropped)")]
    EmptyPanel { dropped: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("block order inconsistent with roles: {0}")]
    BlockOrder(String),

    #[error("rank-deficient design; offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("mask infeasible: no admissible root among remaining variables {remaining:?}")]
    MaskInfeasible { remaining: Vec<usize> },

    #[error("zero-variance input to {0}")]
    ZeroVariance(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid model artifact: {0}")]
    InvalidModel(String),

    #[error("graph too large for path enumeration: {nodes} nodes (limit {limit})")]
    GraphTooLarge { nodes: usize, limit: usize },

    #[error("horizon {horizon} exceeds panel range (anchor {anchor}, T = {time_points})")]
    HorizonOutOfRange {
        horizon: usize,
        anchor: usize,
        time_points: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all {0} bootstrap replicates degenerated")]
    AllReplicatesDegenerate(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
