//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors surfaced by mesh construction, assembly, linear solvers and drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file / key parse failure or inconsistent settings.
    #[error("config error: {0}")]
    Config(String),

    /// Geometry failed validation (degenerate or inverted element).
    #[error("degenerate element {element}: signed volume {volume:.3e}")]
    DegenerateElement { element: usize, volume: f64 },

    /// An iterative linear solver did not reach its tolerance.
    #[error("{solver} failed to converge: residual {residual:.3e} after {iterations} iterations")]
    SolverBreakdown {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Factorization hit a zero/non-positive pivot (non-SPD input or ILUT breakdown).
    #[error("factorization breakdown in {context}: pivot {pivot:.3e} at row {row}")]
    FactorizationBreakdown {
        context: &'static str,
        row: usize,
        pivot: f64,
    },

    /// Matrix/vector dimensions disagree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A run-time assertion requested by the caller failed (e.g. energy bound).
    #[error("assertion failed: {0}")]
    AssertionFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
