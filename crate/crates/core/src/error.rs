use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or weight array does not have the expected extent along an axis.
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: String,
        expected: String,
        actual: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error(transparent)]
    Weights(#[from] WeightError),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("manifest row {row}: {reason}")]
    Manifest { row: usize, reason: String },

    #[error("manifest is not protocol-complete; missing slots: {}", .0.join(", "))]
    Incomplete(Vec<String>),

    #[error("unknown template {0}")]
    Lookup(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("refusing to run: {0}")]
    Refused(String),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    /// A file that is not an image or weight container has the wrong layout.
    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("cannot write output: {0}")]
    Output(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            axis: axis.into(),
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

/// Failures specific to the SFPN weight container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightError {
    #[error("bad magic: expected \"SFPN\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("variant flag mismatch: file has dwc={file_dwc} gdc={file_gdc}, config has dwc={want_dwc} gdc={want_gdc}")]
    FlagMismatch {
        file_dwc: bool,
        file_gdc: bool,
        want_dwc: bool,
        want_gdc: bool,
    },
    #[error("class count mismatch: file has {file}, config has {want}")]
    ClassMismatch { file: u32, want: u32 },
    #[error("missing entry {0}")]
    MissingEntry(String),
    #[error("unexpected entry {0}")]
    UnexpectedEntry(String),
    #[error("duplicate entry {0}")]
    DuplicateEntry(String),
    #[error("entry {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("entry name is not valid utf-8")]
    BadName,
    #[error("unknown flag bits {0:#06x}")]
    UnknownFlags(u16),
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
}
