use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Format(#[from] FormatError),

    /// An analysis precondition failed (unsorted input, empty window, zero rate, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Problem with an experiment configuration, either textual or semantic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },

    #[error("missing required key `{0}`")]
    MissingKey(&'static str),

    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Event-file parse failures. Each variant is a distinct, stable error class.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes {found:02x?}, expected {expected:02x?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("file truncated at byte offset {offset}: {context}")]
    Truncated { offset: u64, context: &'static str },

    #[error("record {index} at byte offset {offset} breaks (run, tick) ordering")]
    Unsorted { index: u64, offset: u64 },

    #[error("record {index} at byte offset {offset} has invalid pixel byte {value}")]
    InvalidPixel { index: u64, offset: u64, value: u8 },

    #[error("{extra} unexpected trailing bytes after the last record at byte offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },

    #[error("embedded configuration is not valid: {0}")]
    Config(ConfigError),

    #[error("embedded configuration is not valid UTF-8")]
    ConfigEncoding,

    #[error("i/o error while reading event file: {0}")]
    Io(#[from] io::Error),
}
