use thiserror::Error;

/// Errors raised by dataset construction, fitting, model selection,
/// simulation and scoring.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoxError {
    #[error("no observations supplied")]
    EmptyData,

    #[error("row {row} has {found} covariates, expected {expected}")]
    RaggedCovariates {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("every observation is censored; the partial likelihood is vacuous")]
    AllCensored,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid group structure: {0}")]
    InvalidGroups(String),

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("objective became non-finite at sweep {sweep}")]
    NonFiniteObjective { sweep: usize },

    #[error("too few events ({events}) to place one in each of {folds} folds")]
    TooFewEvents { events: usize, folds: usize },

    #[error("every group has zero mean coefficient after the first IPF step")]
    AllZeroStepOne,

    #[error("unknown scenario {scenario} with {signals} signals")]
    UnknownScenario { scenario: u8, signals: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("covariance matrix is not positive definite")]
    CovarianceNotPD,

    #[error("censoring weight is zero at t = {time}")]
    ZeroCensorWeight { time: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, CoxError>;

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoxError::NonFiniteValue(what.to_string()))
    }
}
