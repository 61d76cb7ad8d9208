use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("state diverged at node {node} (t = {time})")]
    Divergence { node: usize, time: f64 },
    #[error(
        "no admissible step after {backtracks} backtracks (theta = {theta:e}, last lambda = {last_lambda:e}, last cost gap = {last_gap:e})"
    )]
    StepFailure {
        theta: f64,
        last_lambda: f64,
        last_gap: f64,
        backtracks: usize,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
