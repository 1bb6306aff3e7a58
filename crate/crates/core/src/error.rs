use thiserror::Error;

/// Errors produced by the regression stack.
#[derive(Debug, Error)]
pub enum FsiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point is not on the unit sphere (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("tangent vector is not orthogonal to the base point (inner product {inner})")]
    NotTangent { inner: f64 },

    #[error("log map undefined for antipodal points")]
    Antipodal,

    #[error("quantile grids do not share the same probability levels")]
    GridMismatch,

    #[error("quantile values are not nondecreasing at index {index}")]
    NonMonotoneQuantile { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("weights sum to {sum}, a positive total is required")]
    NonPositiveWeightSum { sum: f64 },

    #[error("degenerate local window{}", match .index { Some(i) => format!(" at observation {i}"), None => String::new() })]
    DegenerateWindow { index: Option<usize> },

    #[error("sphere mean solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("sample covariance of the covariates is singular")]
    SingularCovariance,

    #[error("projected extrinsic fit has zero norm")]
    ZeroNormProjection,

    #[error("single index fitting requires p >= 2; for p = 1 the index is fixed at 1, use local Frechet regression directly")]
    ScalarIndex,

    #[error("no feasible (theta, bandwidth) pair: {0}")]
    AllInfeasible(String),

    #[error("lifetable for unit {unit}: {reason}")]
    Lifetable { unit: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FsiError {
    /// True when the error comes from the numerics (a degenerate window, a
    /// solver failure) rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FsiError::DegenerateWindow { .. }
                | FsiError::NonConvergence { .. }
                | FsiError::SingularCovariance
                | FsiError::ZeroNormProjection
                | FsiError::Antipodal
                | FsiError::AllInfeasible(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, FsiError>;
