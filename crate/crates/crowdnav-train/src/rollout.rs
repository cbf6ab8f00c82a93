//! Experience collection from a pool of persistent environments.
//!
//! Each environment keeps its own simulator, recurrent hidden state, and two
//! random streams (action sampling and reset seeds), so batches depend only
//! on the training seed and parameter history, never on thread scheduling.

use std::io::Write;
use std::path::Path;

use crowdnav_net::{
    build_human_features, build_robot_features, sample_action, Matrix, PolicyParams,
    PolicySession,
};
use crowdnav_sim::{CrowdSim, Observation, OutcomeKind, PredictorKind, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::TrainConfig;
use crate::error::TrainError;

/// One transition as the update step consumes it: the network inputs seen
/// before acting, the sampled action with its statistics, and the outcome.
#[derive(Debug, Clone)]
pub struct StepSample {
    pub features: Matrix,
    pub mask: Vec<bool>,
    pub robot: Matrix,
    pub action: [f64; 2],
    pub log_prob_old: f64,
    pub value_old: f64,
    pub reward: f64,
    /// True when this step ended its episode; the next step in the segment
    /// starts a fresh episode with a zero hidden state.
    pub done: bool,
}

/// Consecutive transitions from one environment, plus what the update needs
/// to replay them: the hidden state before the first step and a value
/// estimate for bootstrapping past the last one.
#[derive(Debug, Clone)]
pub struct EnvSegment {
    pub h_start: Matrix,
    pub steps: Vec<StepSample>,
    pub bootstrap_value: f64,
}

/// Terminal statistics of an episode that finished during collection.
#[derive(Debug, Clone, Copy)]
pub struct FinishedEpisode {
    pub cumulative_reward: f64,
    pub steps: usize,
    pub success: bool,
}

/// Everything gathered between two policy updates, env-major.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub segments: Vec<EnvSegment>,
    pub finished: Vec<FinishedEpisode>,
}

impl RolloutBatch {
    pub fn num_samples(&self) -> usize {
        self.segments.iter().map(|s| s.steps.len()).sum()
    }
}

struct EnvWorker {
    sim: CrowdSim,
    observation: Observation,
    hidden: Matrix,
    action_rng: ChaCha8Rng,
    reset_rng: ChaCha8Rng,
}

impl EnvWorker {
    fn collect(
        &mut self,
        params: &PolicyParams,
        steps: usize,
    ) -> Result<(EnvSegment, Vec<FinishedEpisode>), TrainError> {
        let mut session = PolicySession::new(params)?;
        let h_start = self.hidden.clone();
        let mut samples = Vec::with_capacity(steps);
        let mut finished = Vec::new();
        for _ in 0..steps {
            let (features, mask) =
                build_human_features(&self.observation, session.dims().horizon)?;
            let robot = build_robot_features(&self.observation.robot);
            let output = session.forward_features(&features, &mask, &robot, &self.hidden)?;
            let (action, log_prob) = sample_action(&output, &mut self.action_rng);
            let step = self.sim.step(action)?;
            samples.push(StepSample {
                features,
                mask,
                robot,
                action: [action.x, action.y],
                log_prob_old: log_prob,
                value_old: output.value,
                reward: step.reward,
                done: step.done,
            });
            if step.done {
                let outcome = step.outcome.expect("finished step carries an outcome");
                finished.push(FinishedEpisode {
                    cumulative_reward: outcome.cumulative_reward,
                    steps: outcome.steps,
                    success: outcome.kind == OutcomeKind::ReachedGoal,
                });
                self.observation = self.sim.reset(self.reset_rng.gen())?;
                self.hidden = session.initial_hidden();
            } else {
                self.observation = step.observation;
                self.hidden = output.h_next;
            }
        }
        let bootstrap_value = session.forward(&self.observation, &self.hidden)?.value;
        Ok((
            EnvSegment {
                h_start,
                steps: samples,
                bootstrap_value,
            },
            finished,
        ))
    }
}

/// Pool of training environments that persists across updates.
pub struct RolloutCollector {
    workers: Vec<EnvWorker>,
    steps_per_env: usize,
}

impl RolloutCollector {
    pub fn new(
        sim_config: SimConfig,
        predictor: PredictorKind,
        train: &TrainConfig,
    ) -> Result<Self, TrainError> {
        train.validate()?;
        sim_config.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(train.seed);
        let mut workers = Vec::with_capacity(train.num_envs);
        for _ in 0..train.num_envs {
            let action_rng = ChaCha8Rng::seed_from_u64(master.gen());
            let mut reset_rng = ChaCha8Rng::seed_from_u64(master.gen());
            let mut sim = CrowdSim::new(sim_config.clone(), predictor)?;
            let observation = sim.reset(reset_rng.gen())?;
            let hidden = Matrix::zeros(1, 0);
            workers.push(EnvWorker {
                sim,
                observation,
                hidden,
                action_rng,
                reset_rng,
            });
        }
        Ok(RolloutCollector {
            workers,
            steps_per_env: train.steps_per_update,
        })
    }

    pub fn num_envs(&self) -> usize {
        self.workers.len()
    }

    /// Runs every environment for `steps_per_update` steps under the given
    /// parameters. Output order follows environment index regardless of the
    /// thread count.
    pub fn collect(&mut self, params: &PolicyParams) -> Result<RolloutBatch, TrainError> {
        let d_h = params.dims.d_h;
        for worker in &mut self.workers {
            if worker.hidden.shape() != (1, d_h) {
                worker.hidden = Matrix::zeros(1, d_h);
            }
        }
        let steps = self.steps_per_env;
        #[cfg(feature = "parallel")]
        let results: Vec<_> = self
            .workers
            .par_iter_mut()
            .map(|w| w.collect(params, steps))
            .collect();
        #[cfg(not(feature = "parallel"))]
        let results: Vec<_> = self
            .workers
            .iter_mut()
            .map(|w| w.collect(params, steps))
            .collect();

        let mut segments = Vec::with_capacity(results.len());
        let mut finished = Vec::new();
        for result in results {
            let (segment, mut episodes) = result?;
            segments.push(segment);
            finished.append(&mut episodes);
        }
        Ok(RolloutBatch { segments, finished })
    }
}

/// Writes a human-readable summary of a batch, used when an update aborts on
/// a non-finite loss.
pub fn dump_batch(path: &Path, batch: &RolloutBatch) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    for (e, segment) in batch.segments.iter().enumerate() {
        writeln!(
            file,
            "env {e}: {} steps, bootstrap_value {:.17e}",
            segment.steps.len(),
            segment.bootstrap_value
        )?;
        for (t, s) in segment.steps.iter().enumerate() {
            writeln!(
                file,
                "  t {t}: action [{:.17e}, {:.17e}] log_prob {:.17e} value {:.17e} \
                 reward {:.17e} done {}",
                s.action[0], s.action[1], s.log_prob_old, s.value_old, s.reward, s.done
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crowdnav_net::NetDims;

    fn small_setup() -> (SimConfig, PolicyParams, TrainConfig) {
        let sim = SimConfig {
            max_humans: 3,
            prediction_horizon: 2,
            max_steps: 25,
            ..SimConfig::default()
        };
        let dims = NetDims {
            horizon: 2,
            d_hh: 8,
            heads: 2,
            d_rh: 8,
            d_r: 4,
            d_h: 8,
        };
        let params = PolicyParams::init(dims, 3).unwrap();
        let train = TrainConfig {
            num_envs: 3,
            steps_per_update: 40,
            seed: 9,
            ..TrainConfig::default()
        };
        (sim, params, train)
    }

    #[test]
    fn collection_is_deterministic_and_env_major() {
        let (sim, params, train) = small_setup();
        let mut a = RolloutCollector::new(sim.clone(), PredictorKind::ConstVel, &train)
            .unwrap();
        let mut b =
            RolloutCollector::new(sim, PredictorKind::ConstVel, &train).unwrap();
        let batch_a = a.collect(&params).unwrap();
        let batch_b = b.collect(&params).unwrap();
        assert_eq!(batch_a.segments.len(), 3);
        assert_eq!(batch_a.num_samples(), 120);
        for (sa, sb) in batch_a.segments.iter().zip(&batch_b.segments) {
            assert_eq!(sa.bootstrap_value, sb.bootstrap_value);
            for (x, y) in sa.steps.iter().zip(&sb.steps) {
                assert_eq!(x.action, y.action);
                assert_eq!(x.log_prob_old, y.log_prob_old);
                assert_eq!(x.value_old, y.value_old);
                assert_eq!(x.reward, y.reward);
                assert_eq!(x.done, y.done);
            }
        }
    }

    #[test]
    fn done_steps_are_followed_by_fresh_episodes() {
        let (mut sim, params, mut train) = small_setup();
        // A short step budget forces timeouts inside the segment.
        sim.max_steps = 6;
        train.steps_per_update = 20;
        let mut collector =
            RolloutCollector::new(sim, PredictorKind::ConstVel, &train).unwrap();
        let batch = collector.collect(&params).unwrap();
        assert!(
            !batch.finished.is_empty(),
            "6-step episodes inside a 20-step segment must finish"
        );
        let segment = &batch.segments[0];
        let num_dones = segment.steps.iter().filter(|s| s.done).count();
        assert!(num_dones >= 2);
    }

    #[test]
    fn value_estimates_match_a_replayed_forward_pass() {
        let (sim, params, train) = small_setup();
        let mut collector =
            RolloutCollector::new(sim, PredictorKind::ConstVel, &train).unwrap();
        let batch = collector.collect(&params).unwrap();
        let mut session = PolicySession::new(&params).unwrap();
        for segment in &batch.segments {
            let mut h = segment.h_start.clone();
            for sample in &segment.steps {
                let out = session
                    .forward_features(&sample.features, &sample.mask, &sample.robot, &h)
                    .unwrap();
                assert!((out.value - sample.value_old).abs() <= 1e-9);
                h = if sample.done {
                    session.initial_hidden()
                } else {
                    out.h_next
                };
            }
        }
    }
}
