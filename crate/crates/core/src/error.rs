use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },

    #[error("unsupported encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("zero-length audio in {0}")]
    EmptyAudio(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample {index} out of range: {value}")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz ({what})")]
    SampleRateMismatch {
        expected: u32,
        actual: u32,
        what: String,
    },

    #[error("clip too short: {duration_s} s is shorter than one {window_s} s window")]
    ClipTooShort { duration_s: f64, window_s: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("no inputs")]
    NoInputs,

    #[error("none of the {0} inputs could be read")]
    NoReadableInputs(usize),

    #[error("background {id} is {duration_s} s, shorter than the {timeline_s} s timeline")]
    BackgroundTooShort {
        id: String,
        duration_s: f64,
        timeline_s: f64,
    },

    #[error("background {0} has zero RMS over the timeline")]
    SilentBackground(String),

    #[error("event {0} has zero RMS")]
    SilentEvent(String),

    #[error("missing audio for {0}")]
    MissingAudio(String),

    #[error("template has no {{}} slot: {0:?}")]
    TemplateWithoutSlot(String),

    #[error("scene {index}: {source}")]
    Scene {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("zero-norm row {row} in {what}")]
    ZeroNorm { what: &'static str, row: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown phrase {0:?} (not in phrase database and no embedding given)")]
    UnknownPhrase(String),

    #[error("unknown cluster id {0}")]
    UnknownCluster(u32),

    #[error("{positives} positives exceed the phrase set size {n}")]
    TooManyPositives { positives: usize, n: usize },

    #[error("negative pool exhausted: need {needed} negatives, pool has {available}")]
    PoolExhausted { needed: usize, available: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("malformed interval: {0}")]
    MalformedInterval(String),

    #[error("parse error in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.to_string(),
        }
    }
}
