//! The trained policy packaged as a [`RobotController`].

use crowdnav_sim::{Observation, RobotController, Vec2};

use crate::error::NetError;
use crate::matrix::Matrix;
use crate::policy::{PolicyParams, PolicySession};

/// Deterministic controller around a policy: commands the action mean, which
/// is the standard evaluation-time reading of a Gaussian policy.
#[derive(Debug, Clone)]
pub struct PolicyController {
    session: PolicySession,
    hidden: Matrix,
}

impl PolicyController {
    pub fn new(params: &PolicyParams) -> Result<Self, NetError> {
        let session = PolicySession::new(params)?;
        let hidden = session.initial_hidden();
        Ok(PolicyController { session, hidden })
    }
}

impl RobotController for PolicyController {
    fn begin_episode(&mut self, _seed: u64) {
        self.hidden = self.session.initial_hidden();
    }

    fn act(&mut self, observation: &Observation, _dt: f64) -> Vec2 {
        match self.session.forward(observation, &self.hidden) {
            Ok(output) => {
                self.hidden = output.h_next;
                output.action_mean
            }
            Err(_) => Vec2::ZERO,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NetDims;
    use crowdnav_sim::{CrowdSim, PredictorKind, SimConfig};

    #[test]
    fn controller_runs_an_episode_and_resets_its_memory() {
        let params = PolicyParams::init(
            NetDims {
                horizon: 5,
                d_hh: 8,
                heads: 2,
                d_rh: 8,
                d_r: 8,
                d_h: 8,
            },
            3,
        )
        .unwrap();
        let mut controller = PolicyController::new(&params).unwrap();
        let config = SimConfig {
            max_humans: 3,
            max_steps: 20,
            ..SimConfig::default()
        };
        let mut sim = CrowdSim::new(config, PredictorKind::ConstVel).unwrap();

        let run = |controller: &mut PolicyController, sim: &mut CrowdSim| {
            controller.begin_episode(4);
            let mut obs = sim.reset(4).unwrap();
            let mut actions = Vec::new();
            loop {
                let action = controller.act(&obs, sim.config().dt);
                actions.push(action);
                let out = sim.step(action).unwrap();
                obs = out.observation;
                if out.done {
                    break;
                }
            }
            actions
        };
        let first = run(&mut controller, &mut sim);
        let second = run(&mut controller, &mut sim);
        assert_eq!(first, second);
    }
}
