use std::fmt;

/// Where in an input file a parse failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Byte offset from the start of the file.
    Byte(usize),
    /// 1-based line number.
    Line(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte {b}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    Dimension { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn parse_at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub(crate) fn parse_at_byte(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Byte(offset),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
