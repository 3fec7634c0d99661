use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} at position {index} is not finite")]
    NonFinite { what: &'static str, index: usize },
    #[error("{what} at position {index} is negative ({value})")]
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("budget must be non-negative, got {0}")]
    NegativeBudget(f64),
    #[error("weight at position {index} exceeds 1 ({value})")]
    WeightAboveOne { index: usize, value: f64 },
    #[error("{what} are not sorted non-increasingly at position {index}")]
    NotSorted { what: &'static str, index: usize },
    #[error("{positions} positions for only {agents} agents")]
    MorePositionsThanAgents { positions: usize, agents: usize },
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("allocation is not swap monotone at position {0}")]
    NotSwapMonotone(usize),
    #[error("malformed instance document: {0}")]
    Parse(String),
    #[error("coin probability {0} must lie strictly between 0 and 0.5")]
    CoinOutOfRange(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("oracle size cap exceeded: {agents} agents (max {cap})")]
    SizeCap { agents: usize, cap: usize },
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
