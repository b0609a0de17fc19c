use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("unknown identifier `{0}`")]
    UnknownId(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("partition left node {node} empty after {attempts} draws")]
    EmptyNode { node: usize, attempts: usize },

    #[error("every tuning trial diverged for {0}")]
    AllTrialsDiverged(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("attack needs at least one surrogate model")]
    NoSurrogates,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("non-positive residual degrees of freedom ({rows} rows, {columns} columns)")]
    DegreesOfFreedom { rows: usize, columns: usize },

    #[error("column `{0}` is constant across all records")]
    DegenerateColumn(String),
}
