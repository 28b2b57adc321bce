use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MmvError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("integral not finite: {0}")]
    NonIntegrable(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("value is infinite: {0}")]
    InfiniteValue(String),
}

pub type Result<T> = std::result::Result<T, MmvError>;
