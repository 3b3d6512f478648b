use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("QP solver did not converge after {iterations} pivots (KKT residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("infeasible constraints: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("inference unavailable: {0}")]
    Inference(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
