use thiserror::Error;

/// Errors raised by the precoding library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported constellation: {0}")]
    UnsupportedConstellation(String),

    #[error("invalid symbol index {index} for a {order}-point constellation")]
    InvalidSymbol { index: usize, order: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular or rank deficient: {0}")]
    Singular(String),

    #[error("shift {mu} is within machine tolerance of the pole at {pole}")]
    Pole { mu: f64, pole: f64 },

    #[error("secular bracket undefined: {0}")]
    Bracket(String),

    #[error(
        "root search did not converge after {steps} steps (bracket [{lower}, {upper}], f = {value})"
    )]
    NonConvergence {
        steps: usize,
        lower: f64,
        upper: f64,
        value: f64,
    },

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, SlpError>;
