//! Policy optimization and evaluation for the crowd navigation stack:
//! generalized advantage estimation, clipped-surrogate updates composed on
//! the autodiff tape, rollout collection from persistent environment pools,
//! benchmark metrics, and an episode runner with parallel and sequential
//! backends.

pub mod config;
pub mod error;
pub mod gae;
pub mod metrics;
pub mod ppo;
pub mod rollout;
pub mod runner;
pub mod trainer;

pub use config::TrainConfig;
pub use error::TrainError;
pub use gae::gae;
pub use metrics::{evaluate_records, MetricsReport};
pub use ppo::{ppo_update, Adam, UpdateStats};
pub use rollout::{EnvSegment, FinishedEpisode, RolloutBatch, RolloutCollector, StepSample};
pub use runner::{run_batch, run_batch_serial, run_episode};
pub use trainer::{TrainOutcome, Trainer};
