use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario template `{template}` references unregistered behavior rule `{rule}`")]
    UnknownBehaviorRule { template: String, rule: String },

    #[error("unknown scenario id `{0}`")]
    UnknownScenario(String),

    #[error("truncated gaussian sampler rejected {attempts} consecutive draws (mean {mean}, std {std}, bounds [{lower}, {upper}])")]
    NonConvergent {
        mean: f64,
        std: f64,
        lower: f64,
        upper: f64,
        attempts: u32,
    },

    #[error("non-finite vehicle state: {0}")]
    NonFinite(String),

    #[error("clearance trace is empty")]
    EmptyTrace,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("manifest contains no episodes")]
    EmptyManifest,

    #[error("cannot split {episodes} episodes into non-empty train/val/test sets")]
    InsufficientEpisodes { episodes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint network hash mismatch: expected {expected:016x}, found {found:016x}")]
    ChecksumMismatch { expected: u64, found: u64 },

    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("{0}: dataset is incomplete (no _SUCCESS marker)")]
    IncompleteDataset(PathBuf),

    #[error("episode {index} ({scenario}): {source}")]
    Episode {
        index: u64,
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
