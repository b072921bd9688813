use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Consecutive phases along a grid moved by more than the unwrap limit.
    #[error("phase resolution error at index {index}: jump of {jump:.6} rad exceeds {limit:.6} rad (refine the grid)")]
    Resolution { index: usize, jump: f64, limit: f64 },

    #[error("singular matrix: pivot {pivot:e} at column {column} below threshold {threshold:e}")]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Option price outside the no-arbitrage band `(max(S0 - K, 0), S0)`.
    #[error("price {price} outside no-arbitrage bounds ({lower}, {upper})")]
    Bounds { price: f64, lower: f64, upper: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("series did not converge: {0}")]
    NoConvergence(String),

    #[error("factorization failed: {0}")]
    Factorization(String),
}

impl Error {
    /// True for failures that stem from numerics (branch tracking, singular
    /// systems, non-convergence) rather than from bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Resolution { .. }
                | Error::Singular { .. }
                | Error::NoConvergence(_)
                | Error::Factorization(_)
        )
    }
}
