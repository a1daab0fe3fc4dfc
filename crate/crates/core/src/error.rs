use std::io;
use std::path::PathBuf;

use crate::table::ColumnType;

/// Error returned by a user-supplied block function.
pub type FnError = Box<dyn std::error::Error + Send + Sync>;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: io::Error },

    #[error("gzip decode error near compressed byte offset {offset}: {source}")]
    Decode { offset: u64, source: io::Error },

    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: u64, reason: String },

    #[error("line {line}, column `{column}`: cannot parse {value:?} as {ty}")]
    Coercion {
        line: u64,
        column: String,
        value: String,
        ty: ColumnType,
    },

    #[error("cannot serialize value {value:?} in column `{column}`: {reason}")]
    Serialize {
        column: String,
        value: String,
        reason: &'static str,
    },

    #[error("block `{key}` produced columns [{found}], expected [{expected}]")]
    SchemaMismatch {
        key: String,
        expected: String,
        found: String,
    },

    #[error("block `{key}`: {reason}")]
    Contract { key: String, reason: String },

    #[error("block `{key}` failed: {source}")]
    Block { key: String, source: FnError },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("worker panicked: {0}")]
    Panic(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Key of the block the error is attributed to, when there is one.
    pub fn block_key(&self) -> Option<&str> {
        match self {
            Error::SchemaMismatch { key, .. }
            | Error::Contract { key, .. }
            | Error::Block { key, .. } => Some(key),
            _ => None,
        }
    }
}
