use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Shape of a raster or mask as `(width, height, channels)`.
pub type Shape = (usize, usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("failed to encode image: {0}")]
    Encode(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {left:?} vs {right:?} (width, height, channels)")]
    DimensionMismatch { left: Shape, right: Shape },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid resize target {width}x{height}")]
    InvalidTarget { width: usize, height: usize },

    #[error("mask is not binary")]
    NonBinaryMask,

    #[error("expected {expected} channels, found {found}")]
    ChannelCount { expected: usize, found: usize },

    #[error("field is constant; no threshold exists")]
    ConstantField,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {0} is outside [0, 100]")]
    OutOfRange(f64),

    #[error("template error: {0}")]
    Template(String),

    #[error("missing prediction for pair `{0}`")]
    MissingPrediction(String),

    #[error("manifest schema error: {0}")]
    Schema(String),

    #[error("duplicate pair id `{0}`")]
    DuplicateId(String),

    #[error("split `{split}` references unknown pair id `{id}`")]
    DanglingSplitRef { split: String, id: String },

    #[error("pair id `{id}` appears in splits `{first}` and `{second}`")]
    DuplicateSplit { id: String, first: String, second: String },

    #[error("keyword set is empty")]
    EmptyKeywords,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("caption corpus malformed: {0}")]
    CorpusShape(String),

    #[error("confusion matrix covers zero pixels")]
    EmptyInput,

    #[error("ids do not align across inputs: {}", .0.join(", "))]
    IdMismatch(Vec<String>),

    #[error("pair `{pair_id}`: {source}")]
    Pair {
        pair_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a pair id to an error raised while processing that pair.
    pub fn for_pair(self, pair_id: &str) -> Self {
        Error::Pair {
            pair_id: pair_id.to_string(),
            source: Box::new(self),
        }
    }

    /// Strips any `Pair` context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } => source.root(),
            other => other,
        }
    }
}
