use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension too small: {what} is {actual}, need at least {min}")]
    DimensionTooSmall {
        what: &'static str,
        actual: usize,
        min: usize,
    },

    #[error("patch grid was computed for {grid_w}x{grid_h}, image is {image_w}x{image_h}")]
    GridMismatch {
        grid_w: usize,
        grid_h: usize,
        image_w: usize,
        image_h: usize,
    },

    #[error("downscaled image {width}x{height} is smaller than patch size {patch}")]
    LowScaleTooSmall {
        width: usize,
        height: usize,
        patch: usize,
    },

    #[error("backend does not support this mode: {0}")]
    UnsupportedMode(&'static str),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("backward pass requires a training-mode trace")]
    TraceRequired,

    #[error("feature dimension mismatch: expected {expected}, found {found} in {image_id}")]
    DimMismatch {
        expected: usize,
        found: usize,
        image_id: String,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("{} item(s) failed: {}", .0.len(), summarize(.0))]
    Itemized(Vec<ItemError>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

/// One failed item in a batch operation.
#[derive(Debug, Clone)]
pub struct ItemError {
    pub id: String,
    pub path: PathBuf,
    pub reason: String,
}

fn summarize(items: &[ItemError]) -> String {
    items
        .iter()
        .map(|e| format!("{} ({}): {}", e.id, e.path.display(), e.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}
