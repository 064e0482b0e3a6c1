use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band {low} Hz - {high} Hz for sample rate {sample_rate} Hz")]
    InvalidBand { low: f64, high: f64, sample_rate: f64 },

    #[error("signal of {len} samples is too short (need more than {min})")]
    SignalTooShort { len: usize, min: usize },

    #[error("recording is shorter than one epoch")]
    EmptyResult,

    #[error("need at least 2 channels, got {0}")]
    NotEnoughChannels(usize),

    #[error("every channel was rejected")]
    AllChannelsRejected,

    #[error("missing channel {0}")]
    MissingChannel(String),

    #[error("recording rejected: {0}")]
    RecordingRejected(String),

    #[error("corrupt container at {path}: {reason}")]
    CorruptContainer { path: PathBuf, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid stage token on line {0}")]
    InvalidStageToken(usize),

    #[error("alignment error: {0}")]
    AlignmentError(String),

    #[error("{labels} labels for {epochs} epochs")]
    LabelCountMismatch { labels: usize, epochs: usize },

    #[error("need at least 2 subjects, got {0}")]
    NotEnoughSubjects(usize),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("label {0} outside 0..5")]
    InvalidLabel(usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("teacher feature dim {teacher} does not match student feature dim {student}")]
    FeatureShapeMismatch { teacher: usize, student: usize },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("need at least 3 points, got {0}")]
    NotEnoughPoints(usize),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptContainer {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
