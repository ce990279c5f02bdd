//! Error type shared by all modules of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix or vector shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Invalid argument outside of shape problems (bad ranges, tolerances, counts).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The empirical input covariance is rank deficient; the optimal map is not unique.
    #[error("degenerate input covariance: smallest eigenvalue {min_eig:.3e} below {tol:.3e}")]
    DegenerateInputCovariance { min_eig: f64, tol: f64 },

    /// The target map is zero, so the top singular triplet is undefined.
    #[error("degenerate target: sigma_max = 0")]
    DegenerateTarget,

    /// The network cannot represent every linear map between input and output spaces.
    #[error("capacity violation: min interior dim {min_dim} < min(d_x, d_y) = {required}")]
    CapacityViolation { min_dim: usize, required: usize },

    /// Sampler and walk require square interior layers.
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    /// Dense Hessian materialization refused; use the factored / matrix-free path.
    #[error("dense Hessian guard exceeded: N = {n} > {limit}; use the reduced or matrix-free path")]
    SizeGuardExceeded { n: usize, limit: usize },

    /// Power iteration did not reach the residual tolerance.
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    PowerIterationDidNotConverge { iterations: usize, residual: f64 },

    /// Operation requires a verified global minimum.
    #[error("not a global minimum: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotGlobalMinimum { residual: f64, tol: f64 },

    /// Scalar-network formulas need nonzero layer weights.
    #[error("singular weight: layer {layer} is zero")]
    SingularWeight { layer: usize },

    /// Scalar interpolation comparison is only defined on the positive orthant with tau > 0.
    #[error("unsupported orthant: {0}")]
    UnsupportedOrthant(String),

    /// NaN or other irrecoverable numerical breakdown.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed serialized document (bad format tag, inconsistent dims).
    #[error("invalid document: {0}")]
    InvalidDocument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
