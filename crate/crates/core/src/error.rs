use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFiniteInput(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("forward trace does not match network: {0}")]
    Trace(String),

    #[error("invalid network or spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("non-finite gradient during update")]
    NonFiniteGradient,

    #[error("device fit failed: {0}")]
    Fit(String),

    #[error("input outside configured domain: {0}")]
    Domain(String),

    #[error("degenerate sample window: {0}")]
    DegenerateWindow(String),

    #[error("surrogate returned a non-finite value at {0:?}")]
    Surrogate(Vec<f64>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("model document error: {0}")]
    ModelDoc(String),
}

pub type Result<T> = std::result::Result<T, Error>;
