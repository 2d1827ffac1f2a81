use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error("gradient error: {0}")]
    Gradient(String),

    #[error("frozen classifier parameters changed during training ({which})")]
    FrozenDrift { which: &'static str },

    #[error("unsupported gesture count {0}: at most 8 trajectory families are built in")]
    UnsupportedGestureCount(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
