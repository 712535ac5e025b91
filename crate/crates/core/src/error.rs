use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive definite (leading minor {minor} failed, pivot {pivot:e})")]
    NotPositiveDefinite { minor: usize, pivot: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    #[error(
        "Sylvester coefficients share an eigenvalue: lambda_{i} = {lambda:e}, mu_{j} = {mu:e} (sum below floor {floor:e})"
    )]
    SharedEigenvalue {
        i: usize,
        j: usize,
        lambda: f64,
        mu: f64,
        floor: f64,
    },

    #[error("x strategy `{strategy}` failed: {source}")]
    Strategy {
        strategy: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("rank {rank} exceeds min({m}, {n})")]
    RankTooLarge { rank: usize, m: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("loss-decrease certificate is positive ({0:e}); adjustment is inconsistent")]
    CertificateViolation(f64),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("config error for key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
