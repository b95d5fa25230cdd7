//! Error taxonomy shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Geometric input that cannot form a valid domain.
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    /// A caller broke a documented precondition (dimension mismatch,
    /// out-of-range parameter, unknown identifier).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Numerics failed: non-convergent bracket, singular factorization,
    /// non-finite value where a finite one is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A guard against memory blowup fired (materialization size, rank cap).
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// Filesystem problems, annotated with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Shorthand for contract violations.
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Shorthand for numeric failures.
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Shorthand for resource-limit guards.
    pub fn resource(msg: impl Into<String>) -> Self {
        Error::ResourceLimit(msg.into())
    }
}
