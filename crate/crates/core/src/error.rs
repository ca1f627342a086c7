use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A column, feature reference, or header does not match the schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Input data violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A missing-value policy could not be applied.
    #[error("imputation error: {0}")]
    Imputation(String),

    /// A requested partition would be empty or is otherwise invalid.
    #[error("split error: {0}")]
    Split(String),

    /// A statistic requires both outcome classes but only one is present.
    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    /// Instance weights sum to zero where positive total weight is required.
    #[error("degenerate weights: {0}")]
    DegenerateWeight(String),

    /// A prediction was requested for a group the model does not know.
    #[error("routing error: {0}")]
    Routing(String),

    /// Invalid configuration (flags, grids, budgets).
    #[error("config error: {0}")]
    Config(String),

    /// A model or report file is malformed or has an unsupported version.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
