use thiserror::Error;

/// Errors produced anywhere in the observer toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmioError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("linear program is infeasible (conflicting constraint {constraint})")]
    Infeasible { constraint: usize },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("lower function exceeds upper function at sample {sample} (output {output})")]
    InvalidPair { sample: usize, output: usize },

    #[error("box is not contained in the abstraction domain")]
    OutsideDomain,

    #[error("soundness fault at k={k}: {detail}")]
    Soundness { k: usize, detail: String },

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("unknown system '{name}' (available: {available})")]
    UnknownSystem { name: String, available: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SmioError {
    fn from(e: std::io::Error) -> Self {
        SmioError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SmioError>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SmioError::DimensionMismatch {
            expected,
            got,
            context,
        })
    }
}
