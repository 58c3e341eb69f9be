use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("profile value {value} at x = {x} lies outside [0, 1]")]
    ProfileOutOfRange { x: f64, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("domain mismatch: expected {expected}, found {found}")]
    DomainMismatch { expected: String, found: String },

    #[error("state space too large: 2^{sites} states exceeds the oracle limit")]
    StateSpaceTooLarge { sites: usize },

    #[error("random stream exhausted after {draws} draws")]
    RngExhausted { draws: u64 },

    #[error("absorbing state reached at t = {time}")]
    Absorbing { time: f64 },

    #[error("value is not positive where a logarithm is required (site {site}, value {value})")]
    NonPositive { site: usize, value: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("integrator failed to reach tolerance {tolerance:e} (estimated error {estimate:e})")]
    IntegratorFailure { tolerance: f64, estimate: f64 },

    #[error("time segments are not contiguous: expected start {expected}, found {found}")]
    NonContiguous { expected: f64, found: f64 },

    #[error("merge of incompatible summaries: {0}")]
    IncompatibleMerge(String),

    #[error("unknown claim `{0}`")]
    UnknownClaim(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
