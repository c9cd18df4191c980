use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("subspace is not invariant under the grading (defect {defect:.3e})")]
    NotInvariant { defect: f64 },

    #[error("subspace is not contained in the ambient frame (defect {defect:.3e})")]
    NotContained { defect: f64 },

    #[error("ODE residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    OdeResidual { residual: f64, tol: f64 },

    #[error("lambda = {lambda} is not an eigenvalue (sigma_min = {sigma_min:.3e})")]
    NotEigenvalue { lambda: f64, sigma_min: f64 },

    #[error("trace mismatch {mismatch:.3e} exceeds tolerance")]
    TraceMismatch { mismatch: f64 },

    #[error("oracle budget exceeded: {unknowns} unknowns > {budget}")]
    BudgetExceeded { unknowns: usize, budget: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
