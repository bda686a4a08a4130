use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model invalid: {0}")]
    ModelInvalid(String),
    /// A quantity that needs strictly positive densities was asked for at the
    /// edge of the simplex.
    #[error("boundary state: {0}")]
    Boundary(String),
    #[error("force undefined: {0}")]
    ForceUndefined(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("capability not provided by this cost: {0}")]
    Unsupported(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
