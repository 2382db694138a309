use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A missing `(image, category)` prediction key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct EntryKey {
    pub image: String,
    pub category: String,
}

impl std::fmt::Display for EntryKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.image, self.category)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid category name {0:?}")]
    InvalidCategory(String),

    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),

    #[error("duplicate category {0:?} in universe")]
    DuplicateCategory(String),

    #[error("image {image:?}: dot ({x}, {y}) lies outside {width}x{height}")]
    DotOutOfBounds {
        image: String,
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },

    #[error("image {image:?}: category {category:?} has an empty dot list")]
    EmptyDotList { image: String, category: String },

    #[error("image {image:?}: category {category:?} is not in the category universe")]
    CategoryNotInUniverse { image: String, category: String },

    #[error("image {image:?} has non-positive dimensions")]
    InvalidImageSize { image: String },

    #[error("unknown image id {0:?}")]
    UnknownImage(String),

    #[error("{} prediction entries missing, first: {}", .0.len(), .0.first().map(|k| k.to_string()).unwrap_or_default())]
    MissingPredictions(Vec<EntryKey>),

    #[error("duplicate prediction entry {0}")]
    DuplicatePrediction(EntryKey),

    #[error("invalid density grid: {0}")]
    InvalidGrid(String),

    #[error("grid level {level} is too fine for a {height}x{width} image")]
    LevelTooFine {
        level: u32,
        height: usize,
        width: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("geometry mismatch for {key}: payload is {payload_height}x{payload_width}, expected {expected_height}x{expected_width} or the canvas size")]
    GeometryMismatch {
        key: EntryKey,
        payload_height: usize,
        payload_width: usize,
        expected_height: usize,
        expected_width: usize,
    },

    #[error("negative value {0} where a count is required")]
    NegativeInput(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("image {0:?} has zero total ground-truth count")]
    ZeroTotal(String),

    #[error("invalid mosaic pair: {0}")]
    InvalidMosaic(String),

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status for the CLI: 3 for I/O failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
