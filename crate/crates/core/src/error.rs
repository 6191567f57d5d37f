use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the refinement engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("payload size mismatch: header implies {expected} bytes, found {actual}")]
    PayloadSize { expected: usize, actual: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scribble out of bounds: point ({row}, {col}) outside {height}x{width}")]
    ScribbleOutOfBounds {
        row: i64,
        col: i64,
        height: usize,
        width: usize,
    },

    #[error("empty seed set")]
    EmptySeeds,

    #[error("likelihood map contains values outside the open interval (0, 1)")]
    DegenerateLikelihood,

    #[error(
        "non-finite level set at step {step} (max |region| {region:.3e}, max |user| {user:.3e}, \
         max |length| {length:.3e}, max |distance| {distance:.3e})"
    )]
    Diverged {
        step: usize,
        region: f64,
        user: f64,
        length: f64,
        distance: f64,
    },

    #[error("undefined surface distance: {0}")]
    UndefinedSurfaceDistance(&'static str),

    #[error("empty error region")]
    EmptyErrorRegion,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("session finished")]
    SessionFinished,

    #[error("slice {0} has not been fetched")]
    SliceNotFetched(usize),

    #[error("slice {slice} out of range for {num_slices} slices")]
    SliceOutOfRange { slice: usize, num_slices: usize },

    #[error("log replay diverged: {0}")]
    Replay(String),

    #[error("slice {slice}: {source}")]
    AtSlice {
        slice: usize,
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

    pub(crate) fn at_slice(self, slice: usize) -> Self {
        Error::AtSlice {
            slice,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
