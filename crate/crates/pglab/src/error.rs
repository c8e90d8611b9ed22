use thiserror::Error;

/// Library-level error type. Numerical routines are strict: dimension
/// mismatches and non-finite values are hard errors, never silent NaN
/// propagation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            got,
        }
    }

    pub fn non_finite(what: &'static str, detail: impl Into<String>) -> Self {
        Error::NonFinite {
            what,
            detail: detail.into(),
        }
    }
}

/// Check every entry of a slice for NaN/Inf; error names the offending index.
pub fn ensure_finite(what: &'static str, xs: &[f64]) -> Result<()> {
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::non_finite(what, format!("entry {i} = {x}")));
        }
    }
    Ok(())
}
