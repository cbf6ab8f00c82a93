use serde::{Deserialize, Serialize};

use crate::vec2::Vec2;

/// Full kinematic state of one agent (robot or human).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub goal: Vec2,
    /// Preferred speed cap in m/s.
    pub v_max: f64,
    /// Orientation in radians; bookkeeping only, it does not constrain motion.
    pub heading: f64,
    /// Disc radius in m.
    pub radius: f64,
}

impl AgentState {
    pub fn new(position: Vec2, goal: Vec2, v_max: f64, radius: f64) -> Self {
        let to_goal = goal - position;
        let heading = if to_goal.length_squared() > 0.0 {
            to_goal.y.atan2(to_goal.x)
        } else {
            0.0
        };
        AgentState {
            position,
            velocity: Vec2::ZERO,
            goal,
            v_max,
            heading,
            radius,
        }
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.position.distance(self.goal)
    }

    /// Velocity that heads straight for the goal at `v_max`, slowing down on
    /// the final approach so the goal is not overshot within one step.
    pub fn preferred_velocity(&self, dt: f64) -> Vec2 {
        let to_goal = self.goal - self.position;
        let dist = to_goal.length();
        if dist <= self.v_max * dt {
            to_goal / dt
        } else {
            to_goal * (self.v_max / dist)
        }
    }
}
