use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quantum number: {0}")]
    InvalidQuantumNumber(String),

    #[error("unknown manifold {0}")]
    UnknownManifold(String),

    #[error("selection rule violated: {0}")]
    SelectionRule(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("no protected subspace of dimension {dim}: {reason}")]
    NoProtectedSubspace { dim: usize, reason: String, best: Option<Box<crate::subspace::SubspaceReport>> },

    #[error("integrator step size underflow at t = {t}: step {step:e}, local error {worst_error:e}")]
    StepSize { t: f64, step: f64, worst_error: f64 },

    #[error("non-physical state: {0}")]
    NonPhysicalState(String),

    #[error("fit did not converge (residual norm {residual:e}): {reason}")]
    FitFailed { residual: f64, reason: String },

    #[error("subspace not preserved: projector defect {defect:.3e} exceeds {limit}")]
    SubspaceNotPreserved { defect: f64, limit: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}
