use thiserror::Error;

/// Errors raised anywhere in the simulator, reconstruction, or harness.
#[derive(Error, Debug)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller-supplied argument is out of range or inconsistent.
    #[error("argument error: {0}")]
    Argument(String),
    /// An operation was attempted on a state that does not support it.
    #[error("state error: {0}")]
    State(String),
    /// Input data (files, tables) is malformed.
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for the CLI: 1 for usage/config problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 1,
            Error::State(_) | Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
        }
    }
}
