use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("exponent p must be a finite real > 1, got {0}")]
    InvalidExponent(f64),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("index {index} is past the end of a table of length {len} with no tail model")]
    OutOfTable { index: u64, len: usize },

    #[error("tail sum cannot be certified: {0}")]
    TailUnknown(String),

    #[error("supremum not certified: scan maximum still rising at r = {r_max}")]
    Inconclusive { r_max: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("denominator vanishes on the support of the test sequence")]
    ZeroDenominator,

    #[error("sequence must vanish on the first {required} indices (nonzero at n = {index})")]
    PrefixViolation { required: u64, index: u64 },

    #[error("alpha = {alpha} is not supported here for p = {p} (use the bounds route)")]
    UnsupportedAlpha { alpha: f64, p: f64 },

    #[error("minimizer did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("design matrix is ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),

    #[error("no witness found up to n = {0}")]
    NotFound(u64),

    #[error("parse error at `{token}`: {reason}")]
    Parse { token: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn parse(token: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            token: token.into(),
            reason: reason.into(),
        }
    }
}
