//! Robot policies over observations.
//!
//! Baselines only see what the robot sees: current positions of visible
//! humans. Velocities are estimated by differencing consecutive
//! observations per slot, and the unobservable human radius is replaced by a
//! conservative footprint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::AgentState;
use crate::env::Observation;
use crate::orca::{orca_velocity, OrcaParams};
use crate::socialforce::{social_force_velocity, SocialForceParams};
use crate::vec2::Vec2;

/// Human disc radius assumed by baselines when the true value is unknown.
/// Worst case over the randomized spawn range plus a 0.1 m buffer: velocity
/// estimates lag one step, and planners that ride a constraint boundary need
/// slack to absorb mid-step human turns.
pub const ASSUMED_HUMAN_RADIUS: f64 = 0.6;

/// A policy mapping observations to velocity commands.
pub trait RobotController {
    /// Called once before each episode; `seed` drives any internal sampling.
    fn begin_episode(&mut self, seed: u64);
    /// Picks the velocity command for the current step.
    fn act(&mut self, observation: &Observation, dt: f64) -> Vec2;
}

/// Tracks per-slot positions across steps to estimate visible humans' velocities.
#[derive(Debug, Clone, Default)]
struct VelocityTracker {
    last_positions: Vec<Option<Vec2>>,
}

impl VelocityTracker {
    fn reset(&mut self) {
        self.last_positions.clear();
    }

    /// Returns the believed state of every visible human and records the
    /// current positions for the next call.
    fn visible_humans(&mut self, observation: &Observation, dt: f64) -> Vec<AgentState> {
        let slots = observation.humans.len();
        self.last_positions.resize(slots, None);
        let mut humans = Vec::new();
        for (slot, (human, &visible)) in observation
            .humans
            .iter()
            .zip(&observation.visibility)
            .enumerate()
        {
            if !visible {
                self.last_positions[slot] = None;
                continue;
            }
            let velocity = match self.last_positions[slot] {
                Some(prev) => (human.position - prev) / dt,
                None => Vec2::ZERO,
            };
            self.last_positions[slot] = Some(human.position);
            let mut state =
                AgentState::new(human.position, human.position, 1.0, ASSUMED_HUMAN_RADIUS);
            state.velocity = velocity;
            humans.push(state);
        }
        humans
    }
}

/// Reciprocal collision avoidance against the visible humans.
#[derive(Debug, Clone)]
pub struct OrcaController {
    pub params: OrcaParams,
    tracker: VelocityTracker,
}

impl OrcaController {
    pub fn new(params: OrcaParams) -> Self {
        OrcaController {
            params,
            tracker: VelocityTracker::default(),
        }
    }
}

impl Default for OrcaController {
    fn default() -> Self {
        // Humans never yield to the robot, so splitting the correction with
        // them would leave half of every conflict unresolved.
        OrcaController::new(OrcaParams {
            responsibility: 1.0,
            ..OrcaParams::default()
        })
    }
}

impl RobotController for OrcaController {
    fn begin_episode(&mut self, _seed: u64) {
        self.tracker.reset();
    }

    fn act(&mut self, observation: &Observation, dt: f64) -> Vec2 {
        let humans = self.tracker.visible_humans(observation, dt);
        orca_velocity(&observation.robot, &humans, &self.params, dt)
    }
}

/// Social force steering against the visible humans.
#[derive(Debug, Clone)]
pub struct SocialForceController {
    pub params: SocialForceParams,
    tracker: VelocityTracker,
}

impl SocialForceController {
    pub fn new(params: SocialForceParams) -> Self {
        SocialForceController {
            params,
            tracker: VelocityTracker::default(),
        }
    }
}

impl Default for SocialForceController {
    fn default() -> Self {
        SocialForceController::new(SocialForceParams::default())
    }
}

impl RobotController for SocialForceController {
    fn begin_episode(&mut self, _seed: u64) {
        self.tracker.reset();
    }

    fn act(&mut self, observation: &Observation, dt: f64) -> Vec2 {
        let humans = self.tracker.visible_humans(observation, dt);
        social_force_velocity(&observation.robot, &humans, &self.params, dt)
    }
}

/// Uniformly random commands: direction on the circle, speed in [0, v_max].
#[derive(Debug, Clone)]
pub struct RandomController {
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        RandomController {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RobotController for RandomController {
    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, observation: &Observation, _dt: f64) -> Vec2 {
        let angle = self.rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = self.rng.gen_range(0.0..observation.robot.v_max);
        Vec2::new(angle.cos(), angle.sin()) * speed
    }
}
