use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the exit code the CLI maps them to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line-count mismatch: source has {src} lines, target has {tgt} lines")]
    Alignment { src: usize, tgt: usize },

    #[error("corpus is empty after {0}")]
    EmptyCorpus(&'static str),

    #[error("vocabulary fingerprint mismatch: {0}")]
    Fingerprint(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    Encoding { id: usize, size: usize },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("score table does not cover corpus index {0}")]
    Coverage(usize),

    #[error("capability not available: {0}")]
    Capability(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("candidate/reference count mismatch: {candidates} vs {references}")]
    Pairing { candidates: usize, references: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corruption(String),

    #[error("non-finite values in {tensor}")]
    NumericalInstability { tensor: String },

    #[error("numerical instability in batch {batch}: {source}")]
    BatchFailed {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("strategy '{strategy}' failed during {stage}: {source}")]
    Stage {
        strategy: String,
        stage: &'static str,
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

    /// Process exit code: 2 for configuration problems, 3 for data problems,
    /// 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Capability(_) | Error::Precondition(_) => 2,
            Error::NumericalInstability { .. } => 4,
            Error::BatchFailed { source, .. } | Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
