use thiserror::Error;

/// Errors produced by the tensor, image and optimization layers.
#[derive(Debug, Error)]
pub enum TnpError {
    /// Shapes, ranks or mode sizes that do not fit together.
    #[error("structural error: {0}")]
    Structure(String),

    /// A parameter outside of its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// A dense materialization that would exceed the element budget.
    #[error("capacity error: {requested} elements requested, budget is {budget}")]
    Capacity { requested: usize, budget: usize },

    #[error("optimization diverged at step size {beta}: loss {loss:e} exceeds {limit:e}")]
    Divergence { beta: f64, loss: f64, limit: f64 },

    /// A NaN or infinity surfaced inside a pipeline stage.
    #[error("non-finite value in stage `{0}`")]
    NonFinite(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("image codec error: {0}")]
    Codec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TnpError> = std::result::Result<T, E>;

pub(crate) fn structure(msg: impl Into<String>) -> TnpError {
    TnpError::Structure(msg.into())
}
