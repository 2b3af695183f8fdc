use thiserror::Error;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid preference vector: {0}")]
    Preference(String),

    #[error("non-finite gradient (global norm {norm}); optimizer step rejected")]
    NonFiniteGradient { norm: f64 },

    #[error("sampling produced a non-finite state at Euler step {step}")]
    Sampling { step: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("degenerate group statistics: {0}")]
    Degenerate(String),

    #[error("analytic oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("report mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
