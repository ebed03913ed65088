use thiserror::Error;

/// Error type shared by the whole estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The drift (or another model callback) returned a non-finite value.
    #[error("simulation failure at step {time_index}: {message}")]
    Simulation { time_index: usize, message: String },

    /// A quadrature or linear-solve accuracy check failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The operation is not available for this input (e.g. missing analytic
    /// density, or adaptive selection in dimension below three).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The debiasing shift lattice `(l+1)^d` is too large to enumerate.
    #[error("dimensionality limit exceeded: {0}")]
    Dimensionality(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
