//! Optimal reciprocal collision avoidance.
//!
//! Each neighbor induces one linear constraint on the agent's next velocity
//! (a half-plane bordering its velocity obstacle, shifted by half of the
//! smallest correcting change so both agents share the avoidance effort).
//! The new velocity is the feasible point closest to the preferred velocity,
//! found by an incremental linear program over the speed disc. When the
//! constraints admit no feasible point, a fallback program picks the velocity
//! minimizing the maximum violation.

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::vec2::Vec2;

/// Determinant threshold below which constraint boundaries count as parallel.
const PARALLEL_EPS: f64 = 1e-10;

/// Parameters of the reciprocal avoidance velocity query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrcaParams {
    /// Collision lookahead horizon in s.
    pub time_horizon: f64,
    /// Neighbors beyond this center distance (m) are ignored.
    pub neighbor_dist: f64,
    /// At most this many nearest neighbors constrain the velocity.
    pub max_neighbors: usize,
    /// Fraction of the avoidance correction this agent takes on itself.
    /// Mutually avoiding agents split it evenly; an agent dodging neighbors
    /// that will not yield must take the whole correction.
    pub responsibility: f64,
}

impl Default for OrcaParams {
    fn default() -> Self {
        OrcaParams {
            time_horizon: 5.0,
            neighbor_dist: 10.0,
            max_neighbors: 10,
            responsibility: 0.5,
        }
    }
}

/// Closed half-plane of permitted velocities: `v` is allowed when
/// `(v - point) . normal >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    /// Builds a half-plane; the normal is normalized and must be nonzero.
    pub fn new(point: Vec2, normal: Vec2) -> Self {
        debug_assert!(normal.length_squared() > 0.0, "half-plane needs a normal");
        HalfPlane {
            point,
            normal: normal.normalize_or_zero(),
        }
    }

    /// Signed distance of `v` from the boundary; negative means violated.
    pub fn clearance(&self, v: Vec2) -> f64 {
        (v - self.point).dot(self.normal)
    }

    /// Boundary direction whose left side is the permitted side.
    fn direction(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }
}

/// Builds the avoidance constraint `other` imposes on `agent`, with `agent`
/// taking the `responsibility` share of the correction.
///
/// For non-overlapping agents the velocity obstacle is truncated at
/// `time_horizon`; overlapping agents fall back to a separation constraint
/// that resolves the penetration within one `dt`.
pub fn orca_halfplane(
    agent: &AgentState,
    other: &AgentState,
    time_horizon: f64,
    dt: f64,
    responsibility: f64,
) -> HalfPlane {
    let rel_pos = other.position - agent.position;
    let rel_vel = agent.velocity - other.velocity;
    let dist_sq = rel_pos.length_squared();
    let sum_r = agent.radius + other.radius;
    let sum_r_sq = sum_r * sum_r;

    let (u, normal) = if dist_sq > sum_r_sq {
        let inv_horizon = 1.0 / time_horizon;
        // Vector from the truncation-circle center to the relative velocity.
        let w = rel_vel - rel_pos * inv_horizon;
        let w_len_sq = w.length_squared();
        let dot = w.dot(rel_pos);
        if dot < 0.0 && dot * dot > sum_r_sq * w_len_sq {
            // Closest exit is through the truncation circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = if w_len > 0.0 { w / w_len } else { Vec2::new(1.0, 0.0) };
            (unit_w * (sum_r * inv_horizon - w_len), unit_w)
        } else {
            // Closest exit is through one of the cone legs.
            let leg = (dist_sq - sum_r_sq).sqrt();
            let dir = if rel_pos.det(w) > 0.0 {
                Vec2::new(
                    rel_pos.x * leg - rel_pos.y * sum_r,
                    rel_pos.x * sum_r + rel_pos.y * leg,
                ) / dist_sq
            } else {
                Vec2::new(
                    rel_pos.x * leg + rel_pos.y * sum_r,
                    -rel_pos.x * sum_r + rel_pos.y * leg,
                ) / -dist_sq
            };
            let u = dir * rel_vel.dot(dir) - rel_vel;
            (u, dir.perp())
        }
    } else {
        // Already overlapping: push apart far enough to separate within dt.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.length();
        let unit_w = if w_len > 0.0 {
            w / w_len
        } else if dist_sq > 0.0 {
            (-rel_pos).normalize_or_zero()
        } else {
            Vec2::new(1.0, 0.0)
        };
        (unit_w * (sum_r * inv_dt - w_len), unit_w)
    };

    HalfPlane::new(agent.velocity + u * responsibility, normal)
}

/// Finds the velocity of length at most `v_max` that satisfies every
/// half-plane and is closest to `preferred`. Infeasible systems are resolved
/// by minimizing the maximum signed violation.
pub fn linear_program_2d(constraints: &[HalfPlane], preferred: Vec2, v_max: f64) -> Vec2 {
    let mut result = Vec2::ZERO;
    let feasible_up_to = solve_2d(constraints, v_max, preferred, false, &mut result);
    if feasible_up_to < constraints.len() {
        solve_3d(constraints, feasible_up_to, v_max, &mut result);
    }
    result
}

/// Picks the new velocity for `agent` given the states of nearby agents.
pub fn orca_velocity(agent: &AgentState, neighbors: &[AgentState], params: &OrcaParams, dt: f64) -> Vec2 {
    let mut ranked: Vec<(f64, usize)> = neighbors
        .iter()
        .enumerate()
        .filter_map(|(idx, other)| {
            let d_sq = agent.position.distance_squared(other.position);
            (d_sq <= params.neighbor_dist * params.neighbor_dist).then_some((d_sq, idx))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(params.max_neighbors);

    let constraints: Vec<HalfPlane> = ranked
        .iter()
        .map(|&(_, idx)| {
            orca_halfplane(agent, &neighbors[idx], params.time_horizon, dt, params.responsibility)
        })
        .collect();
    linear_program_2d(&constraints, agent.preferred_velocity(dt), agent.v_max)
}

/// Optimizes along the boundary line of `constraints[index]`, restricted to
/// the speed disc and the earlier constraints. Returns false when that
/// restriction is empty.
fn solve_on_line(
    constraints: &[HalfPlane],
    index: usize,
    v_max: f64,
    opt: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> bool {
    let line_point = constraints[index].point;
    let line_dir = constraints[index].direction();
    let dot = line_point.dot(line_dir);
    let discriminant = dot * dot + v_max * v_max - line_point.length_squared();
    if discriminant < 0.0 {
        // The boundary line misses the speed disc entirely.
        return false;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for prev in &constraints[..index] {
        let prev_dir = prev.direction();
        let denominator = line_dir.det(prev_dir);
        let numerator = prev_dir.det(line_point - prev.point);
        if denominator.abs() <= PARALLEL_EPS {
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    let t = if direction_opt {
        if opt.dot(line_dir) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        (line_dir.dot(opt - line_point)).clamp(t_left, t_right)
    };
    *result = line_point + line_dir * t;
    true
}

/// Incremental LP over the speed disc. Returns the number of constraints
/// satisfied before the first irrecoverable one (== len when feasible).
fn solve_2d(
    constraints: &[HalfPlane],
    v_max: f64,
    opt: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> usize {
    *result = if direction_opt {
        // `opt` is a unit direction: optimize to the disc edge.
        opt * v_max
    } else if opt.length_squared() > v_max * v_max {
        opt.normalize_or_zero() * v_max
    } else {
        opt
    };

    for (i, plane) in constraints.iter().enumerate() {
        if plane.clearance(*result) < 0.0 {
            let saved = *result;
            if !solve_on_line(constraints, i, v_max, opt, direction_opt, result) {
                *result = saved;
                return i;
            }
        }
    }
    constraints.len()
}

/// Fallback for infeasible systems: moves the result toward the velocity
/// minimizing the maximum signed violation over all constraints.
fn solve_3d(constraints: &[HalfPlane], begin: usize, v_max: f64, result: &mut Vec2) {
    let mut worst = 0.0;
    for i in begin..constraints.len() {
        if -constraints[i].clearance(*result) <= worst {
            continue;
        }
        let dir_i = constraints[i].direction();
        // Project earlier constraints onto the set of velocities that violate
        // constraint i by exactly the current amount.
        let mut projected = Vec::with_capacity(i);
        for prev in &constraints[..i] {
            let prev_dir = prev.direction();
            let determinant = dir_i.det(prev_dir);
            let point = if determinant.abs() <= PARALLEL_EPS {
                if dir_i.dot(prev_dir) > 0.0 {
                    continue;
                }
                (constraints[i].point + prev.point) * 0.5
            } else {
                constraints[i].point
                    + dir_i * (prev_dir.det(constraints[i].point - prev.point) / determinant)
            };
            let direction = (prev_dir - dir_i).normalize_or_zero();
            projected.push(HalfPlane::new(point, direction.perp()));
        }

        let saved = *result;
        if solve_2d(&projected, v_max, constraints[i].normal, true, result) < projected.len() {
            *result = saved;
        }
        worst = -constraints[i].clearance(*result);
    }
}
