//! Error taxonomy shared across the crate.
//!
//! The four variants map onto the CLI exit codes: configuration/validation
//! problems (2), numerical failures (3), and guard aborts for runaway
//! simulations (4). `Logic` indicates a broken caller contract (stale index,
//! zero-rate sampling) and is a bug, not an input problem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("logic error: {0}")]
    Logic(String),
    /// Particle-cap or jump-accumulation guard tripped. Carries a state
    /// summary so the abort is diagnosable.
    #[error("explosion guard: {0}")]
    Explosion(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        SimError::Numeric(msg.into())
    }
    pub fn logic(msg: impl Into<String>) -> Self {
        SimError::Logic(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 numeric, 4 guard abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Io(_) => 2,
            SimError::Numeric(_) | SimError::Logic(_) => 3,
            SimError::Explosion(_) => 4,
        }
    }

    /// Short machine-parsable code printed ahead of the message.
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Config(_) => "config",
            SimError::Numeric(_) => "numeric",
            SimError::Logic(_) => "logic",
            SimError::Explosion(_) => "explosion",
            SimError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
