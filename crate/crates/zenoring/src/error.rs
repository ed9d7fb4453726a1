use thiserror::Error;

/// Unified error type for the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical precondition was violated (negative power, zero lifetime, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration file or parameter-set problem.
    #[error("configuration error: {0}")]
    Config(String),

    /// The adaptive integrator shrank the step below the representable minimum.
    #[error(
        "integration failure: step size underflow at t = {t:.6e} s (h = {h:.3e} s); \
         the system is too stiff for the configured tolerances"
    )]
    StepUnderflow { t: f64, h: f64 },

    /// Two grids that must coincide do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Malformed input data file.
    #[error("data format error: {0}")]
    DataFormat(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
