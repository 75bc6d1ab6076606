use thiserror::Error;

use crate::agents::AgentError;
use crate::config::ConfigError;
use crate::evaluation::EvalError;
use crate::imitation::ImitationError;
use crate::protocol::ProtocolError;

/// Top-level error with the process exit code it maps to.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Imitation(#[from] ImitationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(ConfigError::Override(_)) => 1,
            Error::Numeric(_)
            | Error::Imitation(ImitationError::Diverged { .. })
            | Error::Protocol(ProtocolError::Agent(AgentError::Model(ImitationError::Diverged { .. })))
            | Error::Eval(EvalError::Degenerate | EvalError::NonPositiveSd { .. }) => 3,
            _ => 2,
        }
    }
}
