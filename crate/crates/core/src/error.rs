use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("inconsistent feature dimension: {0}")]
    InconsistentFeatureDim(String),
    #[error("unknown AU `{0}`")]
    UnknownAu(String),
    #[error("unknown level `{level}` for attribute `{attribute}`")]
    UnknownGroupLevel { attribute: String, level: String },
    #[error("unknown group attribute `{0}`")]
    UnknownAttribute(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("group level `{0}` lacks one of the truth classes")]
    DegenerateGroup(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("dataset is not binarized for AU `{0}`")]
    NotBinarized(String),
    #[error("complete or quasi-complete separation detected")]
    Separation,
    #[error("singular design matrix: {0}")]
    SingularDesign(String),
    #[error("invalid count: {0}")]
    InvalidCount(String),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid label {label} for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("group level `{0}` not present")]
    MissingGroup(String),
    #[error("only one class present in labels")]
    SingleClass,
    #[error("scores do not align with records: {scores} scores for {records} records")]
    Misaligned { scores: usize, records: usize },
    #[error("cannot balance: {0}")]
    InfeasibleBalance(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
