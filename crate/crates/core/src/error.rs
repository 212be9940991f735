use std::fmt;

/// First constraint a probability vector breaks, with the 1-based index involved.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecViolation {
    Empty,
    OutOfRange { j: usize, value: f64 },
    NotIncreasing { j: usize },
    Spacing { j: usize, spacing: f64 },
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecViolation::Empty => write!(f, "probability vector is empty"),
            SpecViolation::OutOfRange { j, value } => {
                write!(f, "p_{j} = {value} is not in the open interval (0, 1)")
            }
            SpecViolation::NotIncreasing { j } => {
                write!(f, "p is not strictly increasing at j = {j}")
            }
            SpecViolation::Spacing { j, spacing } => write!(
                f,
                "n * (p_{} - p_{j}) = {spacing} is below 1 at j = {j}",
                j + 1
            ),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid bounds [{a}, {b}]: need finite a < b")]
    InvalidBounds { a: f64, b: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("value {value} at index {index} lies outside [{lo}, {hi}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid quantile specification: {0}")]
    Spec(SpecViolation),
    #[error("privacy budget must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no dataset maps to the requested quantiles")]
    Infeasible,
    #[error("instance too large for enumeration: {size} blocks exceeds {limit}")]
    InstanceTooLarge { size: f64, limit: f64 },
    #[error("block distribution has no mass")]
    DegenerateDistribution,
    #[error("selected gap {index} has zero length")]
    ZeroVolumeGap { index: usize },
    #[error("noise scale must be positive and finite, got {0}")]
    InvalidNoise(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("requested subsample of {requested} rows but only {available} numeric rows exist")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<SpecViolation> for Error {
    fn from(v: SpecViolation) -> Self {
        Error::Spec(v)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
