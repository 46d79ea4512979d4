use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric or structural parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a precondition (shape, range, emptiness).
    #[error("invalid input: {0}")]
    Input(String),

    /// Input is structurally valid but degenerate (all-zero signal, zero DC).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Configuration failed validation; the string carries the field path.
    #[error("config error: {0}")]
    Config(String),

    /// Model training could not proceed.
    #[error("training error: {0}")]
    Training(String),

    /// A per-class threshold cannot be computed because the class has no
    /// labeled points.
    #[error("threshold undefined for class {class} ({name}): no points carry this label")]
    ThresholdUndefined { class: usize, name: String },

    /// A pipeline stage is missing an artifact produced by an earlier stage.
    #[error("stage '{stage}' requires missing artifact: {artifact}")]
    StageDependency { stage: String, artifact: String },

    /// A numerical routine failed to produce a finite result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
