use thiserror::Error;

use crate::game::Violation;

#[derive(Debug, Error)]
pub enum CirlError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid game: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidGame(Vec<Violation>),
    #[error("domain build error: {0}")]
    Build(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("inconsistent observation: no supported objective explains the action")]
    InconsistentObservation,
    #[error("transition is stochastic; exact enumeration unavailable, use Monte Carlo")]
    StochasticTransition,
    #[error("missing solution: {0}")]
    MissingSolution(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("archive error: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CirlError> = std::result::Result<T, E>;
