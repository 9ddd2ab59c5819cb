//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlosaError {
    /// Physical or structural inconsistency inside the simulation (overlapping
    /// vehicles, negative gap after a step). Episodes abort with diagnostics.
    #[error("simulation integrity fault: {0}")]
    SimulationIntegrity(String),

    /// An operation was called on an episode that has already terminated.
    #[error("episode already finished: {0}")]
    EpisodeFinished(String),

    /// Invalid configuration (bad field value, unknown field, unreadable file).
    #[error("config error: {0}")]
    Config(String),

    /// Contract violation at a module boundary (e.g. update called on a
    /// non-full buffer, dimension mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite value escaped a numeric routine; carries a diagnostic
    /// snapshot of the offending computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GlosaError>;
