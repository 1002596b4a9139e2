use thiserror::Error;

/// Errors raised by estimator construction, marginal evaluation and the
/// Monte-Carlo machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("marginal is not finite: {0}")]
    NonFiniteMarginal(String),

    #[error("quadrature did not converge: achieved error bound {achieved:.3e}, requested {requested:.3e}")]
    Convergence { achieved: f64, requested: f64 },

    #[error("all mixture components have zero marginal density at the evaluation point")]
    DegenerateMixture,

    #[error("design matrix is rank deficient (smallest/largest singular value = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("effective sample size {ess:.1} is below the required {required:.1}")]
    LowEffectiveSampleSize { ess: f64, required: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
