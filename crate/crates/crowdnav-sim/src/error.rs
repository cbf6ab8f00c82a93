use thiserror::Error;

/// Errors raised by the simulator and episode logging.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("could not place agent {agent} after {attempts} rejection-sampling attempts")]
    PlacementFailed { agent: usize, attempts: usize },
    #[error("step() called on a finished episode")]
    EpisodeFinished,
    #[error("reward context has both terminal flags set")]
    ConflictingTerminals,
    #[error("episode log I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("episode log parse failed: {0}")]
    Parse(String),
    #[error("episode log is empty or missing its header line")]
    EmptyLog,
}
