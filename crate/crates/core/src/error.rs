use thiserror::Error;

/// Errors produced while building or executing plans.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("permutation is not a bijection: {0}")]
    InvalidPermutation(String),

    #[error("unsatisfiable partition configuration: {0}")]
    Unsatisfiable(String),

    #[error("race detected in {scope}: elements {first} and {second} both write point {point}")]
    Race {
        scope: String,
        first: usize,
        second: usize,
        point: usize,
    },

    #[error("block {block} needs {needed} bytes of shared storage, limit is {limit}")]
    Capacity {
        block: usize,
        needed: usize,
        limit: usize,
    },

    #[error("kernel fault at element {element}: {message}")]
    KernelFault { element: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::InvalidPermutation(_) => "invalid-permutation",
            Error::Unsatisfiable(_) => "unsatisfiable",
            Error::Race { .. } => "race",
            Error::Capacity { .. } => "capacity",
            Error::KernelFault { .. } => "kernel-fault",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
