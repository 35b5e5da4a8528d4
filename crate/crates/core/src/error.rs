use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("axis `{axis}`: {reason}")]
    AxisMismatch { axis: String, reason: String },

    #[error("expected {expected} measures (one per axis), got {got}")]
    MeasureCount { expected: usize, got: usize },

    #[error("value {value} at flat index {index} lies outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },

    #[error("tensor holds {got} entries but axes require {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid measure on axis `{axis}`: {reason}")]
    InvalidMeasure { axis: String, reason: String },

    #[error("invalid partition of unity on axis `{axis}`: {reason}")]
    InvalidPartition { axis: String, reason: String },

    #[error("degenerate localization: total localized mass {mass:e} is not positive")]
    DegenerateLocalization { mass: f64 },

    #[error("empty support on axis {axis}")]
    EmptySupport { axis: usize },

    #[error("index {index} out of range for axis `{axis}` of size {size}")]
    IndexOutOfRange { axis: String, index: usize, size: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("net search infeasible: heavy column {column} has no element above the lower threshold")]
    NetInfeasible { column: usize },

    #[error("no valid net found after {attempts} attempts")]
    NetNotFound { attempts: usize },

    #[error("no ε-approximation found after {attempts} attempts (best worst-column error {best_error})")]
    ApproximationNotFound { attempts: usize, best_error: f64 },

    #[error("cells do not cover element {element}")]
    UncoveredElement { element: usize },

    #[error("atom {atom} on axis `{axis}` has mass {mass} exceeding half the equipartition tolerance {limit}")]
    HeavyAtom { axis: String, atom: usize, mass: f64, limit: f64 },

    #[error("no qualifying cell: {0}")]
    NoQualifyingCell(String),

    #[error("not a valid rectangle: {0}")]
    InvalidRectangle(String),

    #[error("SEH oracle found no rectangle: {0}")]
    OracleFailure(String),

    #[error("postcondition violated: {0}")]
    Postcondition(String),

    #[error("instance too large for exact mode: {0}")]
    TooLarge(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
