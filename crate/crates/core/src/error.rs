use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported {format} version {found} (expected {expected})")]
    Version {
        format: &'static str,
        expected: u8,
        found: u8,
    },

    #[error("truncated {0}")]
    Truncated(&'static str),

    #[error("trailing bytes after {0}")]
    TrailingBytes(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("code {code} out of range for vocabulary of {vocab}")]
    CodeOutOfRange { code: u32, vocab: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("no voiced frames")]
    NoVoicedFrames,

    #[error("duplicate packet sequence number {0}")]
    DuplicatePacket(u32),

    #[error("missing packet sequence numbers {0:?}")]
    MissingPackets(Vec<u32>),

    #[error("missing header packet")]
    MissingHeaderPacket,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
