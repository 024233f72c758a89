use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single reason an instance failed validation.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceViolation {
    EmptyDimension { n: usize, m: usize },
    DimensionMismatch { field: &'static str, expected: usize, found: usize },
    PreferenceOutOfRange { kind: usize, item: usize, value: f64 },
    NonpositiveReward { item: usize, value: f64 },
    NegativeBudget { item: usize, value: f64 },
    NonpositiveMu(f64),
    DegenerateRow { kind: usize },
    ZeroHorizon,
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyDimension { n, m } => write!(f, "empty dimension (n={n}, m={m})"),
            Self::DimensionMismatch { field, expected, found } => {
                write!(f, "`{field}` has length {found}, expected {expected}")
            }
            Self::PreferenceOutOfRange { kind, item, value } => {
                write!(f, "preference P[{kind}][{item}] = {value} is outside [0, 1]")
            }
            Self::NonpositiveReward { item, value } => {
                write!(f, "reward of item {item} is {value}, must be > 0")
            }
            Self::NegativeBudget { item, value } => {
                write!(f, "budget of item {item} is {value}, must be >= 0")
            }
            Self::NonpositiveMu(mu) => write!(f, "mu = {mu}, must be > 0"),
            Self::DegenerateRow { kind } => {
                write!(f, "preference row {kind} is identically zero")
            }
            Self::ZeroHorizon => write!(f, "horizon must be at least one arrival"),
        }
    }
}

fn join_violations(v: &[InstanceViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", join_violations(.0))]
    InvalidInstance(Vec<InstanceViolation>),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} online values vs {right} benchmark values")]
    LengthMismatch { left: usize, right: usize },

    #[error("preference row {kind} has no positive entry")]
    DegenerateRow { kind: usize },

    #[error("total arrival rate is zero")]
    ZeroTotalRate,

    #[error("rate function for type {kind} is negative ({value}) at t = {time}")]
    NegativeRate { kind: usize, time: f64, value: f64 },

    #[error("no item is available")]
    NoAvailableItem,

    #[error("quadratic for the segment threshold has no positive root")]
    NoPositiveRoot,

    #[error("sum of lower rate bounds is zero")]
    ZeroLowerSum,

    #[error("segment starting at t = {start} has zero grid length")]
    DegenerateSegment { start: f64 },

    #[error("offline solver did not converge after {iterations} iterations (projected gradient norm {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("I/O error on {}", context.display())]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { context: path.into(), source }
    }

    /// True for errors caused by a malformed or inconsistent configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::InvalidInstance(_)
                | Self::Validation(_)
                | Self::Parse { .. }
                | Self::DegenerateRow { .. }
                | Self::NegativeRate { .. }
                | Self::ZeroTotalRate
                | Self::DegenerateSegment { .. }
                | Self::DimensionMismatch { .. }
        )
    }
}
