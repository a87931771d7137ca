use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("site placement failed after {attempts} attempts (bounds too small for {sites} sites)")]
    Placement { sites: usize, attempts: usize },
    #[error("pixel budget exceeded: {pixels} > {limit}")]
    PixelBudget { pixels: usize, limit: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("schema version mismatch for {artifact}: found {found}, expected {expected}")]
    SchemaVersion {
        artifact: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than by a failing
    /// computation. A missing input file counts as a bad input.
    pub fn is_validation(&self) -> bool {
        if let Error::Io { source, .. } = self {
            return source.kind() == std::io::ErrorKind::NotFound;
        }
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation(_)
                | Error::SchemaVersion { .. }
                | Error::Config(_)
                | Error::Shape(_)
                | Error::Empty(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
