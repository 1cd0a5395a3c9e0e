use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// A session file could not be ingested. `row` is 1-based and counts the header.
    #[error("{}: row {row}: {msg}", file.display())]
    Ingest {
        file: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    ///
    /// 2: configuration, 3: data (unreadable or malformed files), 4: numeric
    /// failure, 5: data that does not fit the model architecture.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            Error::Numeric(_) => 4,
            Error::Shape(_) => 5,
            Error::Ingest { .. }
            | Error::Pipeline(_)
            | Error::Calibration(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 3,
        }
    }
}
