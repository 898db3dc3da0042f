use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("deformation gradient has det F = {0} <= 0")]
    NonPositiveDeterminant(f64),

    #[error("element {element} inverted (det F = {det:.3e})")]
    InvertedElement { element: usize, det: f64 },

    #[error("Newton solver did not converge after {iterations} iterations (residual {residual:.3e}, load fraction {load_fraction})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        load_fraction: f64,
    },

    #[error("transformation map too distorted: min det F_mu = {min_det:.3e} in element {element}")]
    DistortedMap { element: usize, min_det: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("linear algebra: {0}")]
    LinearAlgebra(String),

    #[error("regression: {0}")]
    Regression(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
