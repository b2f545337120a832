use thiserror::Error;

/// Errors raised by samplers, estimators and the sojourn harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: u64, got: u64 },

    #[error("circulant embedding has eigenvalue {min_eigenvalue:e} below tolerance (max {max_eigenvalue:e})")]
    SpectralFailure {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("inconsistent grid: {0}")]
    InconsistentGrid(String),

    #[error(
        "preflight refused: expected {expected_count:.1} exceedances at x=0 (need {required}); \
         about {suggested_n} paths would be required"
    )]
    Preflight {
        expected_count: f64,
        required: u64,
        suggested_n: u64,
    },

    #[error("unresolvable regime: {0}")]
    Regime(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
