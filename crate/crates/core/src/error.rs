use thiserror::Error;

/// Unified error type. Escape of a trajectory into a corridor is *expected*
/// behavior for this system and is reported through return values, not through
/// this enum, except where an operation cannot produce its result at all.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Parameters outside the mathematical domain (e.g. disc radius >= 1/2).
    #[error("domain error: {0}")]
    Domain(String),

    /// A floating-point computation lost too much precision to be trusted.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An operation that needs a finite flight met an escaping trajectory.
    #[error("trajectory escaped: flight exceeded tau_max = {tau_max}")]
    Escape { tau_max: f64 },

    /// A scan or probe cannot resolve the requested structure.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A fit or parameter search exhausted its budget without success.
    #[error("fit error: {0}")]
    Fit(String),

    /// A measure construction violated one of its defining conditions.
    #[error("construction error: condition {condition} failed: {detail}")]
    Construction { condition: String, detail: String },

    /// A search located nothing matching the request.
    #[error("not found: {0}")]
    NotFound(String),

    /// An iteration exceeded its termination guard.
    #[error("non-termination guard tripped: {0}")]
    NonTermination(String),
}

pub type Result<T> = std::result::Result<T, Error>;
