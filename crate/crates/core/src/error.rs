//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: only 2 and 3 are implemented")]
    InvalidDim(usize),

    #[error("invalid exponent p = {p} in dimension {dim}: need 1 < p < {dim}")]
    InvalidExponent { p: f64, dim: usize },

    #[error("degenerate element {elem}: measure {measure:.3e} below {threshold:.3e}")]
    DegenerateElement {
        elem: usize,
        measure: f64,
        threshold: f64,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
