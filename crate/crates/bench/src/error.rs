use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] ori_core::Error),
    #[error("http: {0}")]
    Http(String),
    /// The backend answered in a way no experiment script allows.
    #[error("harness abort: {0}")]
    Abort(String),
    #[error("domain error: {0}")]
    Domain(String),
}

impl From<ureq::Error> for HarnessError {
    fn from(e: ureq::Error) -> Self {
        HarnessError::Http(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
