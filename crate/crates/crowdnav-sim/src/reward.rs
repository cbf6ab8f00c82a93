//! Navigation reward: terminal bonuses, goal-progress shaping, and a
//! discounted penalty for standing inside positions humans are about to
//! occupy.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::vec2::Vec2;

/// Reward granted for reaching the goal.
pub const GOAL_REWARD: f64 = 10.0;
/// Penalty for colliding with a human; also the base of the intrusion penalty.
pub const COLLISION_PENALTY: f64 = -20.0;
/// Scale of the goal-progress potential term.
pub const POTENTIAL_SCALE: f64 = 2.0;

/// A disc in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Vec2,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Disc { center, radius }
    }
}

/// Everything the reward depends on, captured after a step has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardContext {
    pub robot: Disc,
    /// Current disc of every human.
    pub humans: Vec<Disc>,
    /// Ground-truth future discs per human, indexed by lookahead step
    /// (`futures[i][k-1]` is human i after k more steps).
    pub futures: Vec<Vec<Disc>>,
    /// Robot-goal distance before the step.
    pub goal_dist_prev: f64,
    /// Robot-goal distance after the step.
    pub goal_dist_cur: f64,
    pub reached_goal: bool,
    pub collided: bool,
}

/// Strict disc overlap; touching boundaries do not count.
pub fn intrusion_indicator(a: Disc, b: Disc) -> bool {
    a.center.distance_squared(b.center) < (a.radius + b.radius) * (a.radius + b.radius)
}

/// Intrusion penalty against the humans' future discs: an intrusion k steps
/// ahead costs `collision_penalty / 2^k`, and the worst single case over all
/// humans and lookahead steps is charged.
pub fn prediction_reward(ctx: &RewardContext, collision_penalty: f64) -> f64 {
    let mut worst = 0.0f64;
    for future in &ctx.futures {
        for (k_minus_1, disc) in future.iter().enumerate() {
            if intrusion_indicator(ctx.robot, *disc) {
                worst = worst.min(collision_penalty / 2f64.powi(k_minus_1 as i32 + 1));
                break;
            }
        }
    }
    worst
}

/// Goal-progress shaping term: positive when the step moved the robot closer.
pub fn potential_reward(goal_dist_prev: f64, goal_dist_cur: f64) -> f64 {
    POTENTIAL_SCALE * (goal_dist_prev - goal_dist_cur)
}

/// Total step reward. Terminal outcomes dominate; otherwise the shaping and
/// intrusion terms are summed. Both terminal flags set at once is a contract
/// violation.
pub fn full_reward(ctx: &RewardContext) -> Result<f64, SimError> {
    if ctx.reached_goal && ctx.collided {
        return Err(SimError::ConflictingTerminals);
    }
    if ctx.reached_goal {
        return Ok(GOAL_REWARD);
    }
    if ctx.collided {
        return Ok(COLLISION_PENALTY);
    }
    Ok(potential_reward(ctx.goal_dist_prev, ctx.goal_dist_cur) + prediction_reward(ctx, COLLISION_PENALTY))
}
