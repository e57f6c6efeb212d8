use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular kernel evaluated at coincident points{}", fmt_pair(.indices))]
    KernelSingularity { indices: Option<(usize, usize)> },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("no finite sup/Lipschitz constant for {0}")]
    NoFiniteConstant(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("explicit scheme stability guard violated: dt = {dt} exceeds {limit}")]
    StabilityGuard { dt: f64, limit: f64 },

    #[error("non-finite state at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("fixed-point map is not a contraction: gamma = {gamma} <= sup phi = {phi_sup}")]
    ContractionFailure { gamma: f64, phi_sup: f64 },

    #[error("fixed-point iteration did not converge within {max_iter} sweeps (residual {residual})")]
    IterationLimit { max_iter: usize, residual: f64 },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("problem too large: {0}")]
    SizeLimit(String),

    #[error("snapshot grids do not match: {0}")]
    SnapshotMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_pair(indices: &Option<(usize, usize)>) -> String {
    match indices {
        Some((i, j)) => format!(" (particles {i}, {j})"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
