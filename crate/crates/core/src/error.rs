use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A real value does not fit the fixed-point range of the ring.
    #[error("value {value} outside fixed-point range (|x| < {bound})")]
    Range { value: f64, bound: f64 },

    /// Invalid ring configuration.
    #[error("invalid ring parameters: {0}")]
    RingParams(String),

    /// A protocol rule was violated (party mismatch, triple reuse, length mismatch, ...).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// An operation received an input outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Floating-point reference computation produced NaN or infinity.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed configuration or calibration data.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn protocol(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
