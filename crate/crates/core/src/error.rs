use thiserror::Error;

/// Errors raised by the library. The CLI maps the variant families onto
/// process exit codes (configuration 2, data 3, numerical 4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at line {line}: {message}")]
    DataLine { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    /// A sampled ratio phi/(C kappa) exceeded one: the bounding constant is wrong.
    #[error("dominance violated: phi/(C kappa) = {ratio} at {location}")]
    DominanceViolated { ratio: f64, location: f64 },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("rejection sampler exceeded {0} attempts")]
    RetryCapExceeded(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DominanceViolated { .. }
                | Error::Factorization(_)
                | Error::RetryCapExceeded(_)
                | Error::Numerical(_)
        )
    }

    pub fn is_data(&self) -> bool {
        matches!(self, Error::DataLine { .. } | Error::Data(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
