use std::path::PathBuf;

use exo_kinematics::KinematicsError;

pub type Result<T, E = GaitError> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline. Variant names double as the
/// error names reported by the command-line tool.
#[derive(Debug, thiserror::Error)]
pub enum GaitError {
    #[error("MissingFile: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("SchemaMismatch: {file}: {detail}")]
    SchemaMismatch { file: String, detail: String },
    #[error("InvariantViolation: {0}")]
    InvariantViolation(String),
    #[error("EmptyResult: {0}")]
    EmptyResult(String),
    #[error("EmptyInput: {0}")]
    EmptyInput(String),
    #[error("MixedChannels: {0}")]
    MixedChannels(String),
    #[error("InsufficientCycles: {0}")]
    InsufficientCycles(String),
    #[error("MissingMarker: {0}")]
    MissingMarker(String),
    #[error("NoExtremumInWindow: detector {detector} finds no {what} in [{lo}, {hi}]%")]
    NoExtremumInWindow {
        detector: String,
        what: String,
        lo: f64,
        hi: f64,
    },
    #[error("OrderingViolation: {0}")]
    OrderingViolation(String),
    #[error("RankDeficient: {0}")]
    RankDeficient(String),
    #[error("AllZeroWeights: every observation was rejected by the bisquare weights")]
    AllZeroWeights,
    #[error("InsufficientData: {0}")]
    InsufficientData(String),
    #[error("NonPositiveResult: predicted cycle time {0:.4} s is not above 0.2 s")]
    NonPositiveResult(f64),
    #[error("SpeedOutOfEnvelope: {speed} km/h outside the training envelope [{lo:.3}, {hi:.3}] km/h")]
    SpeedOutOfEnvelope { speed: f64, lo: f64, hi: f64 },
    #[error("NonMonotoneEvents: {0}")]
    NonMonotoneEvents(String),
    #[error("IllConditionedSegment: {0}")]
    IllConditionedSegment(String),
    #[error("GridMismatch: {0} vs {1} samples")]
    GridMismatch(usize, usize),
    #[error("EmptyChannel: report has no values for {0}")]
    EmptyChannel(String),
    #[error("fold {subject}: {source}")]
    Fold {
        subject: String,
        #[source]
        source: Box<GaitError>,
    },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<GaitError>,
    },
    #[error("sample {index}: {source}")]
    Kinematics {
        index: usize,
        #[source]
        source: KinematicsError,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GaitError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GaitError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        GaitError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn schema(file: impl std::fmt::Display, detail: impl Into<String>) -> Self {
        GaitError::SchemaMismatch {
            file: file.to_string(),
            detail: detail.into(),
        }
    }
}
