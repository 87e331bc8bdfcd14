use thiserror::Error;

/// Errors raised by the compositional toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodaError {
    #[error("composition has a negative part at index {index} ({value})")]
    NegativePart { index: usize, value: f64 },

    #[error("composition parts sum to zero")]
    AllZeroVector,

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("alpha must lie in [-1, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("data contain zero parts, alpha must be strictly positive (got {0})")]
    ZeroWithNonpositiveAlpha(f64),

    #[error("alpha is zero; use the log-ratio transform explicitly")]
    AlphaIsZero,

    #[error("coordinates fall outside the image of the alpha-transformation")]
    OutOfRange,

    #[error("zero part at row {row}, component {component}: logarithm undefined")]
    ZeroPart { row: usize, component: usize },

    #[error("fitted value is zero where the observed value is positive (row {row}, component {component})")]
    FittedZero { row: usize, component: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("component {0} is zero in every row")]
    AllZeroComponent(usize),

    #[error("zero replacements in row {row} sum to {total}, which is not below one")]
    ReplacementExceedsUnity { row: usize, total: f64 },

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("design matrix is rank deficient")]
    RankDeficientDesign,

    #[error("too few rows: {0}")]
    TooFewRows(String),

    #[error("principal component scores are singular")]
    SingularScores,

    #[error("optimizer failed: {0}")]
    OptimizerFailure(String),

    #[error("factor level {0:?} was not seen during training")]
    UnknownFactorLevel(String),

    #[error("component labels do not match the model: expected {expected:?}, got {found:?}")]
    LabelMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("response has zero variance")]
    DegenerateVariance,

    #[error("fold too small: {0}")]
    FoldTooSmall(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = CodaError> = std::result::Result<T, E>;
