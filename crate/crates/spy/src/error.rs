//! Crate-wide error type.

use std::path::PathBuf;

use crate::domain::ComponentClass;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid bounding box [{x_min}, {y_min}, {x_max}, {y_max}]: {reason}")]
    InvalidBox {
        x_min: i64,
        y_min: i64,
        x_max: i64,
        y_max: i64,
        reason: &'static str,
    },

    #[error("malformed annotation: {0}")]
    MalformedAnnotation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported color conversion from {from} to {to}")]
    UnsupportedConversion { from: &'static str, to: &'static str },

    #[error("crop has no pixels inside the frame")]
    EmptyCrop,

    #[error("image data length {got} does not match {width}x{height}x{channels}")]
    BufferSize {
        width: u32,
        height: u32,
        channels: u8,
        got: usize,
    },

    #[error("texture calibration needs at least one {0} sample")]
    EmptyCalibrationClass(ComponentClass),

    #[error("no detection file for image stem `{0}`")]
    MissingDetections(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("stems do not match between inputs: {0}")]
    StemMismatch(String),

    #[error("frame {frame}: {msg}")]
    Generation { frame: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    ImageCodec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that indicate a bad configuration rather than a
    /// processing failure; the CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}
