//! Error type shared by all core modules.

use thiserror::Error;

/// Errors raised by environment construction, samplers and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// A numeric input fell outside its admissible range.
    #[error("{name} must lie in {range}, got {value}")]
    OutOfDomain {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    /// Structurally invalid arguments (bad lengths, inconsistent indices, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The requested operation is not defined for the given law or regime.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// The cookie-count sampler would have produced a value above 2^62.
    #[error("cookie count for u = {u:e} exceeds the cap of 2^62")]
    CookieCapExceeded { u: f64 },
}
