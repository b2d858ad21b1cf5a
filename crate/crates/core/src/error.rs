use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("claim rejected: cell (slot {slot}, lane {lane}) would exceed capacity")]
    CapacityExceeded { slot: usize, lane: usize },

    #[error("slot range {start}..{end} outside pool horizon of {horizon} slots")]
    OutOfHorizon { start: usize, end: usize, horizon: usize },

    #[error("malformed claim: {0}")]
    MalformedClaim(String),

    #[error("invalid workload problem: {0}")]
    InvalidProblem(String),

    #[error("distribution dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("instance too large for exhaustive search: {sequences} decision sequences (limit {limit})")]
    InstanceTooLarge { sequences: f64, limit: f64 },

    #[error("state layout mismatch: expected {expected} features, got {got}")]
    LayoutMismatch { expected: usize, got: usize },

    #[error("non-finite loss during training: {0}")]
    NonFiniteLoss(String),

    #[error("invalid decision: {0}")]
    InvalidDecision(String),

    #[error("parameter file: {0}")]
    Params(String),
}
