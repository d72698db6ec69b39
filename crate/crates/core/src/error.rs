use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("SVD did not converge (master seed {seed:?}, realization {index:?})")]
    Decomposition { seed: Option<u64>, index: Option<u64> },

    #[error("fidelity vanished at step {step:e}; retry with a smaller step")]
    StepTooLarge { step: f64 },

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("chain length {length} exceeds the exact-oracle capacity of {max} sites")]
    Capacity { length: usize, max: usize },

    #[error("ground state is degenerate (gap {gap:e})")]
    Degenerate { gap: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{failed} of {total} realizations failed to decompose")]
    FailureThreshold { failed: usize, total: usize },

    #[error("missing product: {0}")]
    MissingProduct(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Attach realization provenance to a decomposition failure.
    pub fn with_provenance(self, seed: u64, index: u64) -> Self {
        match self {
            Error::Decomposition { .. } => Error::Decomposition {
                seed: Some(seed),
                index: Some(index),
            },
            other => other,
        }
    }
}
