use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps each variant onto a process exit code, see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("problem too large: {0}")]
    Size(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// 1 = usage error, 2 = data error, 3 = numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Argument(_) | Error::Config(_) | Error::Unsupported(_) | Error::Size(_) => 1,
            Error::DegenerateData(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 2,
            Error::Numerical(_) | Error::Optimization(_) => 3,
        }
    }
}
