//! Social force pedestrian model.
//!
//! The agent accelerates toward its preferred velocity with a relaxation
//! time constant while exponential repulsion pushes it away from nearby
//! agents. The resulting velocity is explicitly integrated over one step and
//! clamped to the agent's speed cap.

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::vec2::Vec2;

/// Parameters of the social force velocity query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialForceParams {
    /// Relaxation time in s for steering toward the preferred velocity.
    pub relaxation_time: f64,
    /// Repulsion strength in m/s^2.
    pub repulsion_strength: f64,
    /// Repulsion range in m; larger values decay more slowly with distance.
    pub repulsion_range: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        SocialForceParams {
            relaxation_time: 0.5,
            repulsion_strength: 2.0,
            repulsion_range: 0.5,
        }
    }
}

/// Total social force on `agent`: goal attraction plus pairwise repulsion.
pub fn social_force(agent: &AgentState, neighbors: &[AgentState], params: &SocialForceParams, dt: f64) -> Vec2 {
    let mut force = (agent.preferred_velocity(dt) - agent.velocity) / params.relaxation_time;
    for other in neighbors {
        let offset = agent.position - other.position;
        let dist = offset.length();
        let dir = if dist > 0.0 {
            offset / dist
        } else {
            Vec2::new(1.0, 0.0)
        };
        let magnitude = params.repulsion_strength
            * ((agent.radius + other.radius - dist) / params.repulsion_range).exp();
        force += dir * magnitude;
    }
    force
}

/// Picks the new velocity for `agent` by integrating the social force over
/// one step; the result is clamped to the agent's speed cap.
pub fn social_force_velocity(
    agent: &AgentState,
    neighbors: &[AgentState],
    params: &SocialForceParams,
    dt: f64,
) -> Vec2 {
    (agent.velocity + social_force(agent, neighbors, params, dt) * dt).clamp_length(agent.v_max)
}
