use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid correlation query: {0}")]
    InvalidQuery(String),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    /// The mean squared spatial correlation needs at least one non-target sensor.
    #[error("MSSC undefined for a field with {sensors} sensor(s)")]
    UndefinedMssc { sensors: usize },

    #[error("covariance factorization failed ({size}x{size}): {detail}")]
    Decomposition { size: usize, detail: String },

    #[error("joint covariance of {requested} entries exceeds the limit of {limit}")]
    ScaleLimit { requested: usize, limit: usize },

    /// The asyn-vs-syn threshold has a non-positive denominator, so the
    /// ordering of the two schemes does not depend on the MSSC.
    #[error("degenerate preference region: asyn-infer {}", if *.asyn_always_superior { "always superior" } else { "never superior" })]
    RegionDegenerate { asyn_always_superior: bool },

    #[error("no sign change to bracket a root of {function} on [{lo}, {hi}] (values {f_lo:e}, {f_hi:e})")]
    NumericBracket {
        function: &'static str,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
