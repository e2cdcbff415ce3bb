use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A query point lies outside a precomputed grid.
    #[error("out of range: {0}")]
    Range(String),

    /// Inconsistent configuration, e.g. mismatched grid steps.
    #[error("configuration error: {0}")]
    Config(String),

    /// The truncated support drops more probability mass than allowed.
    #[error("grid truncation drops {mass:.3e} of probability in the {tail} tail (limit {limit:.1e})")]
    Truncation { tail: &'static str, mass: f64, limit: f64 },

    /// A quadrature, root finder or linear solve did not meet its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
}
