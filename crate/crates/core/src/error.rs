use thiserror::Error;

/// Errors raised by the numerical kernels and the intersection analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("argument modulus {modulus} exceeds the evaluation bound {limit}")]
    Domain { modulus: f64, limit: f64 },

    #[error("value overflows double precision")]
    Overflow,

    #[error("sample grid is not uniform: {0}")]
    Grid(String),

    #[error("function vanishes on the region boundary near {re}{im:+}i")]
    BoundaryZero { re: f64, im: f64 },

    #[error("iteration failed to converge: {0}")]
    Convergence(String),

    #[error("matrix is numerically singular (smallest singular value {sigma_min:e}, threshold {tol:e})")]
    Singular { sigma_min: f64, tol: f64 },

    #[error("target point is not in the image of the operator (residual {residual:e})")]
    NotReachable { residual: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
