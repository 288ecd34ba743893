use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("need ≥ 2 environments, found {0}")]
    TooFewEnvironments(usize),

    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for `Err(Error::InvalidArgument(..))`.
macro_rules! bail_arg {
    ($($t:tt)*) => {
        return Err($crate::error::Error::InvalidArgument(format!($($t)*)))
    };
}
pub(crate) use bail_arg;
