use thiserror::Error;

/// Errors produced by the rotary math, scaling laws, variants and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RopeError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("causal ordering violated: key position {s} is after query position {t}")]
    Ordering { t: f64, s: f64 },

    #[error("pair index {index} out of range for {pairs} rotary pairs")]
    Index { index: usize, pairs: usize },

    #[error("invalid variant: {0}")]
    Spec(String),
}

impl RopeError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Self::Spec(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, RopeError>;
