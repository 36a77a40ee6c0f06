use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by models, attacks, detectors and the bench harness.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Consecutive layers have incompatible shapes, or data does not match a shape.
    Shape { layer: Option<usize>, message: String },
    /// A precondition on an operation's arguments was violated.
    Contract(String),
    /// A hyper-parameter or run configuration is invalid.
    Config(String),
    /// Non-finite or degenerate values encountered during computation.
    Numeric { layer: Option<usize>, message: String },
    /// A persisted file does not follow its documented layout.
    Format(String),
    /// Underlying I/O failure.
    Io(String),
}

impl Error {
    pub fn shape(message: impl Into<String>) -> Self {
        Error::Shape { layer: None, message: message.into() }
    }

    pub fn shape_at(layer: usize, message: impl Into<String>) -> Self {
        Error::Shape { layer: Some(layer), message: message.into() }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn numeric_at(layer: usize, message: impl Into<String>) -> Self {
        Error::Numeric { layer: Some(layer), message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric { layer: None, message: message.into() }
    }

    pub fn format(message: impl Into<String>) -> Self {
        Error::Format(message.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { layer: Some(i), message } => write!(f, "shape error at layer {i}: {message}"),
            Error::Shape { layer: None, message } => write!(f, "shape error: {message}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Numeric { layer: Some(i), message } => write!(f, "numeric error at layer {i}: {message}"),
            Error::Numeric { layer: None, message } => write!(f, "numeric error: {message}"),
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
