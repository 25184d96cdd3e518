use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A field does not fit the packet it was applied to.
    #[error("field {name}#{index} (offset {offset}, length {length}) exceeds packet of {packet_len} bytes")]
    FieldOutOfBounds {
        name: String,
        index: u32,
        offset: usize,
        length: usize,
        packet_len: usize,
    },

    #[error("invalid field layout for {name}: {reason}")]
    InvalidField { name: String, reason: String },

    #[error("value {value} does not fit a field with {capacity_bits} value bits")]
    ValueOutOfRange { value: u64, capacity_bits: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            context: PathBuf::from(path).display().to_string(),
            source,
        }
    }
}
