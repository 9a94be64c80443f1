use thiserror::Error;

/// Errors raised by the simulator, statistics kernel and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("start pose in collision")]
    StartInCollision,
    #[error("map has no free space")]
    NoFreeSpace,
    #[error("invalid discretization length {0}")]
    InvalidEpsilon(f64),
    #[error("no candidates")]
    NoCandidates,
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("value {0} outside the domain [0, 1]")]
    Domain(f64),
    #[error("empty sample")]
    EmptySample,
    #[error("no tail: {0}")]
    NoTail(String),
    #[error("need at least two distinct labels")]
    SingleLabel,
    #[error("labels are unbalanced: {0}")]
    Unbalanced(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("target bin {0} is not a free bin")]
    NotFreeBin(usize),
    #[error("position ({0}, {1}) lies outside the map")]
    OutOfBounds(f64, f64),
    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
