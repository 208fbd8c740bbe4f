use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("rejected record: {0}")]
    RejectedRecord(String),
    #[error("empty series")]
    EmptySeries,
    #[error("no user is covered by any timestamp bucket")]
    NoCoveredUsers,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} timestamps, found {found}")]
    TooFewTimestamps { needed: usize, found: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("invalid budget split: {0}")]
    BudgetSplit(String),
    #[error("budget for {part} exceeded")]
    BudgetExceeded { part: &'static str },
    #[error("timestamp window ({start}, {end}) out of range for {len} timestamps")]
    WindowOutOfRange { start: usize, end: usize, len: usize },
    #[error("need at least {needed} historical days, found {found}")]
    TooFewDays { needed: usize, found: usize },
    #[error("gradient descent diverged with learning rate {beta}; try a smaller rate")]
    Divergence { beta: f64 },
    #[error("value {value} at timestamp {timestamp}, cell {cell} is not a non-negative integer")]
    NonIntegral { timestamp: usize, cell: usize, value: f64 },
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },
    #[error("cost matrix is not square: {rows} rows, {cols} columns")]
    NotSquare { rows: usize, cols: usize },
    #[error("capacity {capacity} cannot absorb {rows} rows")]
    InsufficientCapacity { rows: usize, capacity: usize },
    #[error("invalid stay distribution: {0}")]
    InvalidDistribution(String),
    #[error("no trajectory prefixes to extend")]
    EmptyPrefixes,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
