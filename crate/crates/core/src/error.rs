use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}: treatment value `{value}` is not 0 or 1")]
    NonBinaryTreatment { row: usize, value: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty group: {0}")]
    EmptyGroup(&'static str),

    #[error("only one treatment arm is present ({0} rows, all with T={1})")]
    SingleArm(usize, u8),

    #[error("expected {expected} features, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("zero margin in contingency table; use Fisher's exact test")]
    ZeroMargin,

    #[error("singular covariance matrix for the {0} group; use the euclidean metric")]
    SingularCovariance(&'static str),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("node {0} is not a leaf")]
    NotALeaf(usize),

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("logistic regression: {0}")]
    Logistic(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
