use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A point landed exactly on a partition endpoint. This is a
    /// measure-zero event; callers resample or nudge, never tie-break.
    #[error("point {0} lies on a partition boundary")]
    BoundaryPoint(String),

    /// Boundary hit at a known step of a trajectory.
    #[error("boundary point at trajectory step {step}")]
    BoundaryAtStep { step: usize },

    #[error("invalid branch index {0}")]
    InvalidBranch(usize),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("joint pmf is not strictly positive")]
    NotStrictlyPositive,

    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// The streaming decoder was driven out of its emit-then-feed order.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
