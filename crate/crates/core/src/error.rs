use thiserror::Error;

use crate::geometry::Pose;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Every particle received zero likelihood. Carries the last valid estimate.
    #[error("tracker diverged after step {step}")]
    TrackerDiverged { step: usize, last_estimate: Pose },

    #[error("configuration error in {source_name}: {message}")]
    Config { source_name: String, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
