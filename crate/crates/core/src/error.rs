use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Invalid(String),

    #[error("non-finite state at inner step {step} (path {path_index})")]
    IntegrationFailure { step: usize, path_index: u64 },

    #[error("singular diffusion matrix at {point:?}")]
    SingularDiffusion { point: Vec<f64> },

    #[error("policy has no row for step {step}, key {key}")]
    MissingKey { step: usize, key: u64 },

    #[error("kernel row (cell {cell}, action {action}) has {samples} samples, need at least {min}")]
    UndersampledRow {
        cell: usize,
        action: usize,
        samples: usize,
        min: usize,
    },

    #[error("{what}: size {size} exceeds guard {limit}")]
    GuardExceeded {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("experiment {kind}: {source}")]
    Experiment {
        kind: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
