use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the scoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt data: {0}")]
    CorruptData(String),
    #[error("image has a zero dimension ({width}x{height})")]
    EmptyImage { width: usize, height: usize },
    #[error("bad .flo magic: read {0}, expected 202021.25")]
    BadMagic(f32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no precomputed flow for {0}")]
    UnresolvedPrecomputedFlow(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss encountered at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("group of size {0} cannot be normalized (need at least 2)")]
    DegenerateGroup(usize),
    #[error("every sample group was filtered out in round {0}")]
    AllGroupsFiltered(usize),
    #[error("manifest line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("duplicate entry id {0:?}")]
    DuplicateId(String),
    #[error("manifest references {} missing file(s): {}", .0.len(), display_paths(.0))]
    MissingReferencedFile(Vec<PathBuf>),
    #[error("win rate needs at least two models, got {0}")]
    InsufficientModels(usize),
    #[error("weight {0:?} has no matching score")]
    WeightMismatch(String),
    #[error("weights sum to {0}, expected 1")]
    WeightSumInvalid(f64),
    #[error("score {name:?} = {value} is outside [0, 1]")]
    ScoreOutOfRange { name: String, value: f64 },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// Attach a path to an I/O error; not-found becomes [`Error::MissingFile`].
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
