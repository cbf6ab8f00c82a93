use thiserror::Error;

/// Errors surfaced by rollout collection, PPO updates, and evaluation runs.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("simulation error: {0}")]
    Sim(#[from] crowdnav_sim::SimError),

    #[error("network error: {0}")]
    Net(#[from] crowdnav_net::NetError),

    #[error("invalid training configuration: {0}")]
    Config(String),

    #[error("non-finite loss in update {update} ({context})")]
    NonFiniteLoss { update: usize, context: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
