use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    Numeric(String),

    /// `I - lambda * D` is singular, so the feedback loop `u = lambda * y` is ill-posed.
    #[error("algebraic loop is singular at lambda = {re} + {im}i")]
    AlgebraicLoop { re: f64, im: f64 },

    #[error("1_n is not an eigenvector of the coupling matrix (residual {residual:e})")]
    NotConsensusEigenvector { residual: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("invalid coefficient: {0}")]
    Coefficient(String),

    #[error("shifted operator A_h - {mu} is singular; retry with a larger shift")]
    SingularShift { mu: f64 },

    #[error("history does not cover the requested time {0}")]
    Coverage(f64),

    #[error("wrong subsystem kind: {0}")]
    Kind(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
