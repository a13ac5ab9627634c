use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("x = {x} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid mesh request: {0}")]
    InvalidMesh(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
