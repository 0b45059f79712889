use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst parameter must lie in the open interval (0,1), got {0}")]
    InvalidHurst(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "series sum(rho(a)^{order}) diverges at H={hurst}: finite only for H < 1 - 1/(2*{order})"
    )]
    AlphaDiverges { hurst: f64, order: u32 },

    #[error("truncated sum did not converge within the work cap of {cap} terms (H={hurst}, order={order})")]
    Unconverged { hurst: f64, order: u32, cap: u64 },

    #[error("walk left the configured span: needs |x| <= {needed} but span is {span}")]
    SpanExceeded { needed: f64, span: f64 },

    #[error("span regeneration cap exceeded after {retries} doublings (replication {replication})")]
    RegenerationCapExceeded { replication: u64, retries: u32 },

    #[error("weight function `{0}` has no closed-form primitive registered")]
    MissingPrimitive(&'static str),

    #[error("weight function `{name}` has no derivative of order {order} registered")]
    MissingDerivative { name: &'static str, order: u32 },

    #[error("Hermite degree {requested} exceeds table maximum {max}")]
    DegreeOverflow { requested: u32, max: u32 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index {index} is outside the generated grid range [{min}, {max}]")]
    IndexOutOfRange { index: i64, min: i64, max: i64 },

    #[error("covariance is not positive definite: {0}")]
    CovarianceNotPd(String),

    #[error("at least {required} replications are required, got {got}")]
    InsufficientReplications { required: usize, got: usize },

    #[error("cannot aggregate or report an empty replication set")]
    EmptyEnsemble,

    #[error("horizon must satisfy floor(2^n t) >= 1 (n={level}, t={horizon})")]
    EmptyWalk { level: u32, horizon: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
