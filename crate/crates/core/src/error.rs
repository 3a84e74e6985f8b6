use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite loss at step {step} in term `{term}`")]
    NonFiniteLoss { step: usize, term: &'static str },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("shape mismatch for tensor `{tensor}`: expected {expected:?}, manifest says {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("truncated blob while reading tensor `{tensor}`: needs bytes up to {needed}, blob has {available}")]
    Truncated {
        tensor: String,
        needed: usize,
        available: usize,
    },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
