use thiserror::Error;

/// Crate-wide error type. Variants separate caller mistakes (domain,
/// dimension) from runtime numerical failures so callers can match on them.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation
    /// (negative temperature, zero spacing, non-Hermitian operator, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched array or operator dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical procedure failed to converge or produced an
    /// unusable result; the message carries the offending location.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A fit could not be performed on the supplied data.
    #[error("fit error: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }
}
