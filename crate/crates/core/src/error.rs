use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("version mismatch: file has format_version {found:?}, this build reads {expected:?}")]
    VersionMismatch { found: String, expected: String },

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("infeasible world spec: {0}")]
    Spec(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Backend(#[from] crate::backend::BackendError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Precondition(_) | Error::Spec(_) => 2,
            Error::Backend(_) => 4,
            _ => 3,
        }
    }
}
