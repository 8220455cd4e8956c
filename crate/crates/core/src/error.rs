use std::path::PathBuf;

/// Errors raised anywhere in the detection toolkit.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The bytes could not be decoded as an image of the named format.
    #[error("cannot decode {format} image: {message}")]
    Decode { format: String, message: String },

    #[error("cannot encode image {}: {message}", path.display())]
    Encode { path: PathBuf, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Normalized moments are undefined for a region without mass.
    #[error("region has zero mass; normalized moments are undefined")]
    ZeroMass,

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
