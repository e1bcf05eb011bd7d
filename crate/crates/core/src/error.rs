use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("taxonomy error: {0}")]
    Taxonomy(String),
    #[error("insufficient data for class {class}: {have} samples, need at least {need}")]
    InsufficientData {
        class: String,
        have: usize,
        need: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape error at {layer}: {msg}")]
    Shape { layer: String, msg: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("tensor {name}: {msg}")]
    TensorMismatch { name: String, msg: String },
    #[error("cannot fold batch norm {0}: not preceded by a conv, depthwise or dense layer")]
    Unfoldable(String),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Divergence { epoch: usize, msg: String },
    #[error("data leak: sample {0} has role test but was requested by a training path")]
    TestLeak(usize),
    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Image { .. } => "image",
            Error::Taxonomy(_) => "taxonomy",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Format { .. } => "format",
            Error::TensorMismatch { .. } => "tensor_mismatch",
            Error::Unfoldable(_) => "unfoldable",
            Error::Divergence { .. } => "divergence",
            Error::TestLeak(_) => "test_leak",
            Error::Other(_) => "other",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(layer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            msg: msg.into(),
        }
    }
}
