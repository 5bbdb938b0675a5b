use thiserror::Error;

/// Errors raised by the knockoff toolkit.
///
/// The variants line up with the CLI exit codes: contract violations are
/// caller mistakes (shape, range, missing seed), degenerate inputs are data
/// that cannot be processed (constant columns, zero signal) and the two
/// numerical variants report a failed factorization or PSD repair.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnockoffError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(
        "matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:.3e}, \
         required jitter {required:.3e} exceeds budget {budget:.3e}"
    )]
    NotPsd {
        min_eigenvalue: f64,
        required: f64,
        budget: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, KnockoffError>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::KnockoffError::Contract(format!($($arg)+)));
        }
    };
}

pub(crate) use ensure;
