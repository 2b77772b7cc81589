use thiserror::Error;

/// Errors raised by the network, gradient and dynamics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("decay constant must be positive and finite, got {0}")]
    InvalidDecay(f64),

    #[error("moment order {order} out of range 1..={n}")]
    OrderOutOfRange { order: usize, n: usize },

    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("coordinate index {index} out of range for dimension {d}")]
    CoordinateOutOfRange { index: usize, d: usize },

    #[error("trace derivative is only defined off the diagonal (i = j = {0})")]
    DiagonalPair(usize),

    #[error("walk enumeration too large: n^(k-1) = {count} exceeds {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("state is infeasible: margin of moment {order} is {margin}")]
    Infeasible { order: usize, margin: f64 },

    #[error("targets are not realizable: m_{order}* = {target} is not below the coincident-configuration moment {bound}")]
    Unrealizable { order: usize, target: f64, bound: f64 },

    #[error("step size fell below {min_step} without an acceptable step")]
    Stalled { min_step: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
