use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are split into two families: input/validation problems and
/// numerical failures. The CLI maps them to exit codes 1 and 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tariff has no rule covering month {month}, hour {hour}")]
    UncoveredCell { month: u8, hour: u8 },

    #[error("tariff rules overlap at month {month}, hour {hour}")]
    OverlappingRules { month: u8, hour: u8 },

    #[error("period {period}: import price {import} is negative")]
    NegativeImportPrice { period: String, import: f64 },

    #[error("period {period}: export price {export} exceeds import price {import}")]
    InvertedPrices { period: String, import: f64, export: f64 },

    #[error("period {period}: rules assign conflicting prices to the same settlement bucket")]
    ConflictingBucketPrices { period: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("period {0} has no hourly records")]
    EmptyBucket(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite integrand value on segment [{lo}, {hi}]")]
    NonFiniteIntegrand { lo: f64, hi: f64 },

    #[error("non-finite marginal value F({g})")]
    NonFiniteMarginalValue { g: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteIntegrand { .. } | Error::NonFiniteMarginalValue { .. } | Error::Numerical(_)
        )
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
