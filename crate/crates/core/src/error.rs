use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input lies outside the domain of an operation (empty sequence,
    /// zero-norm vector, empty text).
    #[error("domain error: {0}")]
    Domain(String),

    /// API misuse: non-scalar loss, repeated backward, missing gradients.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("overflow: {0}")]
    Overflow(String),

    /// The entity mention could not be located for `<e>` replacement.
    #[error("reformatting error: {0}")]
    Reformat(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Usage(_))
    }
}
