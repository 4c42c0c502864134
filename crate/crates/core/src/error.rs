use std::path::PathBuf;

use crate::geocoder::GeocodeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("coverage too large: {count} cells exceed the cap of {cap}")]
    CoverageTooLarge { count: usize, cap: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {invalid} of {total} lines are invalid")]
    CorpusFormat {
        path: PathBuf,
        invalid: usize,
        total: usize,
    },

    #[error("{path}: {message}")]
    FileFormat { path: PathBuf, message: String },

    #[error(transparent)]
    Geocode(#[from] GeocodeError),

    #[error("affinity build failed for {publisher}: {failed} of {total} articles failed")]
    AffinityBuild {
        publisher: String,
        failed: usize,
        total: usize,
    },

    #[error("stamp references unknown article {0}")]
    DanglingArticle(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
