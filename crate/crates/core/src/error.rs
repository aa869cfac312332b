use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("store already exists at {}", .0.display())]
    StoreExists(PathBuf),

    #[error("record size must be at least one byte")]
    ZeroRecordSize,

    #[error("records {start}..{end} extend beyond the end of the store ({record_count} records)")]
    OutOfRange {
        start: u64,
        end: u64,
        record_count: u64,
    },

    #[error("byte length {byte_length} is inconsistent with {count} records of {record_size} bytes")]
    InconsistentRef {
        count: u64,
        byte_length: u64,
        record_size: u64,
    },

    #[error("malformed store metadata in {}: {reason}", path.display())]
    Metadata { path: PathBuf, reason: String },

    #[error("invalid token {0:?}: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),

    #[error("duplicate index entry ({name}, {key})")]
    DuplicateEntry { name: String, key: String },

    #[error("malformed index line {line_no}: {line:?}")]
    MalformedLine { line_no: usize, line: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("group ordinal {0} is outside 0..17576")]
    OrdinalOutOfRange(usize),

    #[error("malformed group entry at ordinal {0}")]
    MalformedGroupEntry(usize),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("epoch {0} is below the supported floor of 1000000000 seconds")]
    EpochTooEarly(u64),

    #[error("coordinate component {0} is outside -999..=999")]
    CoordOutOfBounds(i32),

    #[error("malformed name {0:?}")]
    MalformedName(String),

    #[error("no samples to bin")]
    EmptySamples,

    #[error("sample {0} falls outside the histogram bins")]
    SampleOutsideBins(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn is_not_found(&self) -> bool {
        matches!(self, Error::NotFound(_))
    }
}
