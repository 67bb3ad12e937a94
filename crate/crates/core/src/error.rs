use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (limit {limit})")]
    Range {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no convergence after {iterations} sweeps (Bellman residual {residual:e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("non-finite loss at step {step} (max |target| = {max_abs_target:e})")]
    NonFinite { step: u64, max_abs_target: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("parameter layout mismatch: {0}")]
    Layout(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the `cq` command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence { .. } | Error::NonFinite { .. } => 3,
            _ => 1,
        }
    }
}
