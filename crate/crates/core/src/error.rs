use thiserror::Error;

/// Errors raised by estimation, inference, simulation and I/O routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid bandwidth: h = {0} (must be finite and > 0)")]
    InvalidBandwidth(f64),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ill-conditioned design: {0}")]
    IllConditioned(String),

    #[error("degenerate denominator: |tau_d| = {0:e}")]
    DegenerateDenominator(f64),

    #[error("treatment effect not identified: {0}")]
    NoIdentification(String),

    #[error("collinear covariates: {0}")]
    CollinearCovariates(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("all {0} replications were degenerate")]
    EmptySummary(usize),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unparseable value `{value}` in column `{column}` (row {row})")]
    Parse {
        column: String,
        row: usize,
        value: String,
    },

    #[error("non-binary treatment value `{value}` at row {row}")]
    NonBinaryTreatment { row: usize, value: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl FrdError {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            FrdError::InvalidInput(_) | FrdError::InvalidBandwidth(_) => "invalid_input",
            FrdError::InsufficientSample(_) => "insufficient_sample",
            FrdError::Precondition(_) => "precondition",
            FrdError::IllConditioned(_) => "ill_conditioned",
            FrdError::DegenerateDenominator(_) => "degenerate_denominator",
            FrdError::NoIdentification(_) => "no_identification",
            FrdError::CollinearCovariates(_) => "collinear_covariates",
            FrdError::DegenerateVariance(_) => "degenerate_variance",
            FrdError::EmptySummary(_) => "empty_summary",
            FrdError::MissingColumn(_)
            | FrdError::Parse { .. }
            | FrdError::NonBinaryTreatment { .. } => "data",
            FrdError::Config(_) => "config",
            FrdError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for FrdError {
    fn from(e: std::io::Error) -> Self {
        FrdError::Io(e.to_string())
    }
}

impl From<csv::Error> for FrdError {
    fn from(e: csv::Error) -> Self {
        FrdError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for FrdError {
    fn from(e: serde_json::Error) -> Self {
        FrdError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FrdError>;
