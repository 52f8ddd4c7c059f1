//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain type failed its invariants (bad geometry, bad material, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Geometry outside the stability region |gbar| < 1.
    #[error("unstable cavity geometry: gbar = {gbar} is outside (-1, 1)")]
    UnstableGeometry { gbar: f64 },

    /// A physical-domain restriction was violated (e.g. pair-breaking drive).
    #[error("outside model domain: {0}")]
    Domain(String),

    /// An iterative solver ran out of iterations. Carries the best iterate
    /// found so far, formatted by the caller.
    #[error("did not converge after {iterations} iterations: {details}")]
    NonConvergence { iterations: usize, details: String },

    /// Least-squares problem with an unidentifiable parameter.
    #[error("rank-deficient fit: parameter `{parameter}` is not identifiable ({details})")]
    RankDeficient { parameter: String, details: String },

    /// No periodic structure found where one was required.
    #[error("no periodic structure detected: {0}")]
    NoPeriodicStructure(String),

    /// Requested transverse order above the configured cap.
    #[error("transverse order N = {requested} above the cap {cap}")]
    OrderAboveCap { requested: usize, cap: usize },

    /// Result failed an internal consistency check (e.g. photon truncation).
    #[error("consistency check failed: {0}")]
    Consistency(String),

    /// Underlying linear-algebra failure.
    #[error("linear algebra error: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
