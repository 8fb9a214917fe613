use thiserror::Error;

/// Failures raised by the laboratory operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index ({eta}, {p}) is not admissible: {violated}")]
    Admissibility { eta: f64, p: f64, violated: String },

    #[error("unsupported dimension {dim}: {what} requires d = 1")]
    UnsupportedDimension { dim: usize, what: &'static str },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("singular time: {0} requires tau > 0")]
    SingularTime(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}
