use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A measure specification that violates its structural invariants
    /// (as opposed to one that merely fails probability-measure validation).
    #[error("malformed measure spec: {0}")]
    MalformedMeasure(String),

    #[error("measure is not a probability measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid kernel spec: {0}")]
    InvalidKernel(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("quadrature did not reach tolerance {tolerance:e}: estimate {estimate:e}, error {error:e}")]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("model covariance is not positive definite: {0}")]
    Cholesky(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("slope fit failed: {0}")]
    Fit(String),

    #[error("lambda {lambda:e} is below the trust threshold {threshold:e}")]
    Untrusted { lambda: f64, threshold: f64 },

    #[error("small-ball estimate failed: {0}")]
    SmallBall(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
