use thiserror::Error;

/// Errors raised by ingestion, estimation and simulation.
///
/// Row numbers are 1-based data rows (the header row is not counted).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: missing value in required column `{column}`")]
    MissingRequired { row: usize, column: String },

    #[error("row {row}: block {block} is partially missing")]
    PartialBlock { row: usize, block: &'static str },

    #[error("row {row}: outcome token `{token}` is not 0 or 1")]
    BadOutcome { row: usize, token: String },

    #[error("row {row}: column `{column}` token `{token}` is not numeric")]
    NonNumeric {
        row: usize,
        column: String,
        token: String,
    },

    #[error("dataset has no complete cases")]
    NoCompleteCases,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("estimator requires fully observed data; {incomplete} records are incomplete")]
    IncompleteData { incomplete: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no donor for record {record} (key {key})")]
    EmptyPool { record: usize, key: String },

    #[error("stratum not in selection table: {0}")]
    UnknownStratum(String),

    #[error("zero denominator in {quantity} for record {record}")]
    ZeroDenominator {
        quantity: &'static str,
        record: usize,
    },

    #[error("matrix is singular or ill-conditioned (condition number {cond:e})")]
    Singular { cond: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error("{estimator} did not converge: {reason}")]
    NotConverged { estimator: String, reason: String },
}

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Schema(_) => "schema",
            Error::MissingRequired { .. } => "missing_required",
            Error::PartialBlock { .. } => "partial_block",
            Error::BadOutcome { .. } => "bad_outcome",
            Error::NonNumeric { .. } => "non_numeric",
            Error::NoCompleteCases => "no_complete_cases",
            Error::EmptyDataset => "empty_dataset",
            Error::IncompleteData { .. } => "incomplete_data",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyPool { .. } => "empty_pool",
            Error::UnknownStratum(_) => "unknown_stratum",
            Error::ZeroDenominator { .. } => "zero_denominator",
            Error::Singular { .. } => "singular",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config { .. } => "config",
            Error::UnknownEstimator(_) => "unknown_estimator",
            Error::NotConverged { .. } => "not_converged",
        }
    }

    /// Data row the error refers to, if any.
    pub fn row(&self) -> Option<usize> {
        match self {
            Error::MissingRequired { row, .. }
            | Error::PartialBlock { row, .. }
            | Error::BadOutcome { row, .. }
            | Error::NonNumeric { row, .. } => Some(*row),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
