use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Scenario and sensing parameters for [`crate::env::CrowdSim`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Half the side length of the square arena, in m.
    pub arena_half_width: f64,
    /// Robot sensor range in m; humans at most this far away are visible.
    pub sensor_range: f64,
    /// Number of humans spawned, and the fixed slot count in observations.
    pub max_humans: usize,
    /// Integration step in s.
    pub dt: f64,
    /// Episode length cap in steps.
    pub max_steps: usize,
    /// Randomize human `v_max` in [0.5, 1.5] and radius in [0.3, 0.5]; also
    /// enables random mid-episode goal changes.
    pub randomize_traits: bool,
    /// Per-step probability that a human abandons its goal for a new one
    /// (only when `randomize_traits` is set).
    pub goal_change_prob: f64,
    /// Prediction horizon K: observed humans come with K predicted positions.
    pub prediction_horizon: usize,
    /// History length M: trajectories keep the last M+1 observed positions.
    pub history_len: usize,
    /// Robot disc radius in m; also the goal-reach threshold.
    pub robot_radius: f64,
    /// Seed used when an episode is reset without an explicit seed.
    pub rng_seed: u64,
    /// Replay the `rng_seed` scenario on every reset, ignoring per-episode
    /// seeds, so all episodes share one layout and one human behavior stream.
    pub fixed_scenario: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            arena_half_width: 6.0,
            sensor_range: 5.0,
            max_humans: 20,
            dt: 0.25,
            max_steps: 200,
            randomize_traits: true,
            goal_change_prob: 0.01,
            prediction_horizon: 5,
            history_len: 5,
            robot_radius: 0.3,
            rng_seed: 0,
            fixed_scenario: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.arena_half_width.is_nan() || self.arena_half_width <= 0.0 {
            return Err(SimError::InvalidConfig(
                "arena_half_width must be positive".into(),
            ));
        }
        if self.sensor_range.is_nan() || self.sensor_range < 0.0 {
            return Err(SimError::InvalidConfig(
                "sensor_range must be non-negative".into(),
            ));
        }
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(SimError::InvalidConfig("dt must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(SimError::InvalidConfig("max_steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_change_prob) {
            return Err(SimError::InvalidConfig(
                "goal_change_prob must lie in [0, 1]".into(),
            ));
        }
        if self.prediction_horizon == 0 {
            return Err(SimError::InvalidConfig(
                "prediction_horizon must be positive".into(),
            ));
        }
        if self.history_len == 0 {
            return Err(SimError::InvalidConfig(
                "history_len must be positive".into(),
            ));
        }
        if self.robot_radius.is_nan() || self.robot_radius <= 0.0 {
            return Err(SimError::InvalidConfig(
                "robot_radius must be positive".into(),
            ));
        }
        Ok(())
    }
}
