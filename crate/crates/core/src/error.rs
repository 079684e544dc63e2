use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{condition} violated: {detail}")]
    Condition {
        condition: &'static str,
        detail: String,
    },

    #[error("degenerate spectral point: |Delta_{k}| = {magnitude:e} at rho = {rho}")]
    Degenerate {
        k: usize,
        rho: String,
        magnitude: f64,
    },

    #[error("tensor is not decomposable (Pluecker residual {residual:e} > tol {tol:e})")]
    NotDecomposable { residual: f64, tol: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
