//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    /// A singular value (or coordinate magnitude) fell inside the guard band
    /// around the rank cutoff. Callers must not guess; they rescale or refuse.
    #[error(
        "numerical rank ambiguity: value {value:.3e} lies within [0.1, 10] x cutoff {cutoff:.3e}"
    )]
    ToleranceAmbiguity { value: f64, cutoff: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symplectic: {0}")]
    NonSymplectic(String),

    #[error("group closure exceeded the configured order bound {bound}")]
    OrderBound { bound: usize },

    #[error("polynomial is not invariant: {0}")]
    NotInvariant(String),

    #[error("not expressible in the given generators up to degree {degree}")]
    NotExpressible { degree: u32 },

    #[error("generator set incomplete: {0}")]
    IncompleteGenerators(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
