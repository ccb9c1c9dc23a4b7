//! Error type shared by all numeric modules.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A Cholesky pivot fell below the relative tolerance or went non-finite.
    /// On minibatch Gram matrices this signals rank-deficient network outputs.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    /// The eigensolver exhausted its iteration budget.
    #[error("eigensolver did not converge within {limit} iterations")]
    NoConvergence { limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// The affinity scale heuristic produced sigma = 0 (coincident points).
    #[error("degenerate affinity scale: selected sigma is zero")]
    DegenerateScale,

    /// An orthogonalization batch produced outputs without full column rank.
    /// `iteration` is the training iteration, or 0 for a standalone call.
    #[error("rank-deficient minibatch outputs (iteration {iteration})")]
    RankDeficientBatch { iteration: usize },

    #[error("non-finite training loss (iteration {iteration})")]
    NonFiniteLoss { iteration: usize },

    /// A zero row degree makes the normalized spectral loss undefined.
    #[error("zero degree at row {index}: normalized loss undefined")]
    ZeroDegree { index: usize },

    #[error("labeling length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// The shattering construction failed its own certificates. This is a
    /// bug detector; it does not fire on any valid input.
    #[error("shatter construction invariant violated: {0}")]
    ConstructionInvariantViolated(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
