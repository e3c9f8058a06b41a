use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied data failed. The string names the
    /// offending field or parameter.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A numerical routine did not reach its target accuracy; the achieved
    /// error estimate is attached.
    #[error("numerical failure in {context}: achieved error {achieved:e}, target {target:e}")]
    Numerical {
        context: &'static str,
        achieved: f64,
        target: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
