use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("path resolution too coarse: dt = {dt:e} but at most {required:e} is required (dt <= eps^2/16)")]
    Resolution { dt: f64, required: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Young regime violated: {0}")]
    YoungRegime(String),
    #[error("refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
