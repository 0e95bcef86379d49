use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("accuracy guard tripped: {0}")]
    Accuracy(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("resource limit: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Accuracy guards are reported separately from configuration problems.
    pub fn is_accuracy(&self) -> bool {
        matches!(self, Error::Accuracy(_))
    }
}
