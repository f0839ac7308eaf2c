use thiserror::Error;

/// Errors raised by model construction and the analyses built on it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative share at {location}: {value}")]
    NegativeShare { location: String, value: f64 },

    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    #[error("inadmissible network: {0}")]
    Inadmissible(String),

    #[error("flow matrix is not ergodic (strongly connected: {strongly_connected}, period: {period})")]
    NotErgodic { strongly_connected: bool, period: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("degenerate game: firm {firm} has profit share {epsilon:e} below {minimum:e}")]
    Degenerate { firm: usize, epsilon: f64, minimum: f64 },

    #[error("firm index {firm} out of range (m = {m})")]
    FirmOutOfRange { firm: usize, m: usize },

    #[error("cap `{cap}` exceeded: {value} > {limit}")]
    CapExceeded { cap: &'static str, value: usize, limit: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;
