use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: spatial dims {height}x{width} must be divisible by {factor}")]
    IndivisibleDims {
        op: &'static str,
        height: usize,
        width: usize,
        factor: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backward called without saved forward state ({0})")]
    MissingSavedState(&'static str),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
