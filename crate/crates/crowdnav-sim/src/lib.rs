//! 2D crowd navigation simulator.
//!
//! A disc robot crosses a square arena filled with ORCA-driven humans that
//! react to each other but never to the robot. The crate provides the
//! episodic environment with sensing and reward bookkeeping, the ORCA and
//! social force steering primitives, human trajectory prediction, baseline
//! robot controllers, and JSONL episode logs.

pub mod agent;
pub mod config;
pub mod controller;
pub mod env;
pub mod episode;
pub mod error;
pub mod orca;
pub mod predict;
pub mod reward;
pub mod socialforce;
pub mod vec2;

pub use agent::AgentState;
pub use config::SimConfig;
pub use controller::{OrcaController, RandomController, RobotController, SocialForceController};
pub use env::{CrowdSim, HumanObservation, Observation, StepOutput, ROBOT_V_MAX};
pub use episode::{EpisodeMeta, EpisodeOutcome, EpisodeRecord, OutcomeKind, StepRecord};
pub use error::SimError;
pub use predict::PredictorKind;
pub use vec2::Vec2;
