use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("channel mismatch: operator expects {expected} channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "kernel too small for pattern period (band {band} unreachable at row {row}, col {col})"
    )]
    KernelTooSmall { band: usize, row: usize, col: usize },

    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),

    #[error("transform leaves no valid pixels")]
    EmptyValidRegion,

    #[error("all pixels have degenerate spectra")]
    DegenerateSpectra,

    #[error("all bands have zero mean")]
    ZeroMeanBands,

    #[error("image ({height}x{width}) smaller than {window}x{window} window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },

    #[error("backward called without a recorded forward pass")]
    EmptyTape,

    #[error("non-finite gradient for parameter tensor {0}; step rejected")]
    NonFiniteGradient(usize),

    #[error("non-finite loss at epoch {epoch}, image {image}")]
    NonFiniteLoss { epoch: usize, image: usize },

    #[error("objective diverged at iteration {iter}: {objective:e} > 10x initial {initial:e}")]
    Diverged {
        iter: usize,
        objective: f64,
        initial: f64,
    },

    #[error("bad magic in {0}")]
    BadMagic(PathBuf),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png error: {0}")]
    Png(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
