use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input format error at line {line}: {msg}")]
    InputFormat { line: usize, msg: String },

    #[error("invalid graph input: {0}")]
    InvalidGraph(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite{0}")]
    NotPositiveDefinite(String),

    #[error("MPLE does not exist: the log-pseudolikelihood increases without bound (separation). Supply a proposal location and scale manually")]
    MpleSeparation,

    #[error("MPLE did not converge after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    MpleNonConvergence { iterations: usize, grad_norm: f64 },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("rejection ABC acceptance rate {rate:e} fell below the floor {floor:e} after {attempts} simulations")]
    AcceptanceFloor { rate: f64, floor: f64, attempts: usize },

    #[error("weight degeneracy in round {round}: effective sample size {ess:.3} below {floor}")]
    WeightDegeneracy { round: usize, ess: f64, floor: f64 },

    #[error("exact enumeration over {n} nodes is too large (maximum {max})")]
    EnumerationTooLarge { n: usize, max: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
