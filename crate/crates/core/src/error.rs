use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped so that callers (the CLI in particular) can map them
/// onto coarse failure classes: bad input, numerical failure, or refusal to
/// run an exponential-cost computation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("parse error in hyperedge {index}: {message}")]
    Hyperedge { index: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what}: n = {n} exceeds the cap of {cap} (exponential enumeration)")]
    CapExceeded {
        what: &'static str,
        n: usize,
        cap: usize,
    },

    #[error("matrix is not symmetric (entry ({row}, {col}))")]
    NotSymmetric { row: usize, col: usize },

    #[error("eigenvalue iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no nonzero eigenvalue")]
    NoNonzeroEigenvalue,

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("kernel is not differentiable at x = {x}")]
    NotDifferentiable { x: f64 },

    #[error("chain is not absorbing: {0}")]
    NonAbsorbing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error came from malformed or out-of-range input rather
    /// than from a numerical procedure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::Hyperedge { .. }
                | Error::Parse(_)
                | Error::Domain(_)
                | Error::NotSymmetric { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }

    pub fn is_cap_refusal(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
