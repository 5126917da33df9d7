use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite depth {value} at pixel ({x}, {y})")]
    NonFiniteDepth { x: usize, y: usize, value: f64 },

    #[error("negative depth {value} at pixel ({x}, {y})")]
    NegativeDepth { x: usize, y: usize, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("at least one light source is required")]
    NoLights,

    #[error("object `{0}` does not overlap the sensor area at the requested pose")]
    OffSensor(String),

    #[error("malformed depth file: {0}")]
    DepthFormat(String),

    #[error("{context}: line {line}, column {column}: {message}")]
    Schema {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown object `{0}`")]
    UnknownObject(String),

    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encoding failed for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(context: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Schema {
            context: context.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
