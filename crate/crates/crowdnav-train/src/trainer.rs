//! The training loop: collect, update, log, checkpoint.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crowdnav_net::checkpoint::save_params_to_path;
use crowdnav_net::{NetDims, PolicyParams};
use crowdnav_sim::{PredictorKind, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::TrainError;
use crate::ppo::{ppo_update, Adam, UpdateStats};
use crate::rollout::{dump_batch, FinishedEpisode, RolloutBatch, RolloutCollector};

/// How many finished episodes feed the rolling reward and success stats.
const RECENT_WINDOW: usize = 100;

/// Totals reported once a run finishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOutcome {
    pub updates: usize,
    pub env_steps: usize,
}

/// Owns the policy, the optimizer, and the environment pool for one run.
pub struct Trainer {
    params: PolicyParams,
    adam: Adam,
    collector: RolloutCollector,
    config: TrainConfig,
    shuffle_rng: ChaCha8Rng,
    recent: VecDeque<FinishedEpisode>,
    steps_done: usize,
    updates_done: usize,
    last_batch: Option<RolloutBatch>,
}

impl Trainer {
    /// Fresh run with newly initialized parameters.
    pub fn new(
        sim_config: SimConfig,
        dims: NetDims,
        predictor: PredictorKind,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        let params = PolicyParams::init(dims, config.seed.wrapping_add(0x9E37_79B9))?;
        Self::with_params(sim_config, params, predictor, config)
    }

    /// Run starting from existing parameters.
    pub fn with_params(
        sim_config: SimConfig,
        params: PolicyParams,
        predictor: PredictorKind,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if params.dims.horizon != sim_config.prediction_horizon {
            return Err(TrainError::Config(format!(
                "network horizon {} does not match simulator prediction horizon {}",
                params.dims.horizon, sim_config.prediction_horizon
            )));
        }
        let collector = RolloutCollector::new(sim_config, predictor, &config)?;
        let adam = Adam::new(&params);
        let shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x517C_C1B7));
        Ok(Trainer {
            params,
            adam,
            collector,
            config,
            shuffle_rng,
            recent: VecDeque::new(),
            steps_done: 0,
            updates_done: 0,
            last_batch: None,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn updates_done(&self) -> usize {
        self.updates_done
    }

    /// Mean cumulative reward over the recent episode window.
    pub fn recent_mean_reward(&self) -> Option<f64> {
        if self.recent.is_empty() {
            return None;
        }
        let sum: f64 = self.recent.iter().map(|e| e.cumulative_reward).sum();
        Some(sum / self.recent.len() as f64)
    }

    /// Success percentage over the recent episode window.
    pub fn recent_success_rate(&self) -> Option<f64> {
        if self.recent.is_empty() {
            return None;
        }
        let wins = self.recent.iter().filter(|e| e.success).count();
        Some(100.0 * wins as f64 / self.recent.len() as f64)
    }

    /// Configuration for the next update; with `anneal_lr` set the step size
    /// falls linearly from the configured value toward zero over the run.
    fn update_config(&self) -> TrainConfig {
        let mut config = self.config.clone();
        if config.anneal_lr {
            let planned = config.planned_updates().max(1);
            config.learning_rate *= 1.0 - self.updates_done as f64 / planned as f64;
        }
        config
    }

    /// One collect-update cycle. The collected batch stays available through
    /// `last_batch` so a failed update can be dumped for inspection.
    pub fn update_once(&mut self) -> Result<UpdateStats, TrainError> {
        let batch = self.collector.collect(&self.params)?;
        self.steps_done += batch.num_samples();
        for episode in &batch.finished {
            if self.recent.len() == RECENT_WINDOW {
                self.recent.pop_front();
            }
            self.recent.push_back(*episode);
        }
        let update_config = self.update_config();
        let result = ppo_update(
            &mut self.params,
            &mut self.adam,
            &batch,
            &update_config,
            &mut self.shuffle_rng,
            self.updates_done,
        );
        self.last_batch = Some(batch);
        let stats = result?;
        self.updates_done += 1;
        Ok(stats)
    }

    pub fn last_batch(&self) -> Option<&RolloutBatch> {
        self.last_batch.as_ref()
    }

    /// Runs the whole schedule, writing `log.csv`, periodic checkpoints, and
    /// `checkpoint_final.txt` under `out_dir`. A non-finite loss aborts the
    /// run after dumping the offending batch next to the log.
    pub fn run(&mut self, out_dir: &Path) -> Result<TrainOutcome, TrainError> {
        std::fs::create_dir_all(out_dir)?;
        let mut log = BufWriter::new(File::create(out_dir.join("log.csv"))?);
        writeln!(
            log,
            "update,steps,mean_reward,success_rate,policy_loss,value_loss,entropy,grad_norm"
        )?;
        let planned = self.config.planned_updates();
        for update in 0..planned {
            let stats = match self.update_once() {
                Ok(stats) => stats,
                Err(err) => {
                    if let (TrainError::NonFiniteLoss { .. }, Some(batch)) =
                        (&err, self.last_batch.as_ref())
                    {
                        dump_batch(&out_dir.join("nan_batch.txt"), batch)?;
                    }
                    return Err(err);
                }
            };
            self.write_log_row(&mut log, &stats)?;
            log.flush()?;
            let completed = update + 1;
            if self.config.checkpoint_every > 0
                && completed % self.config.checkpoint_every == 0
                && completed < planned
            {
                let name = format!("checkpoint_{completed:06}.txt");
                save_params_to_path(&self.params, out_dir.join(name))?;
            }
        }
        save_params_to_path(&self.params, out_dir.join("checkpoint_final.txt"))?;
        Ok(TrainOutcome {
            updates: planned,
            env_steps: self.steps_done,
        })
    }

    fn write_log_row<W: Write>(&self, log: &mut W, stats: &UpdateStats) -> std::io::Result<()> {
        let reward = self
            .recent_mean_reward()
            .map(|r| format!("{r:.6}"))
            .unwrap_or_default();
        let success = self
            .recent_success_rate()
            .map(|s| format!("{s:.2}"))
            .unwrap_or_default();
        writeln!(
            log,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.updates_done,
            self.steps_done,
            reward,
            success,
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.grad_norm
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_trainer(anneal_lr: bool) -> Trainer {
        let sim = SimConfig::default();
        let dims = NetDims {
            horizon: sim.prediction_horizon,
            d_hh: 4,
            heads: 2,
            d_rh: 4,
            d_r: 4,
            d_h: 4,
        };
        let config = TrainConfig {
            num_envs: 2,
            steps_per_update: 5,
            total_steps: 40,
            learning_rate: 1e-3,
            anneal_lr,
            ..TrainConfig::default()
        };
        Trainer::new(sim, dims, PredictorKind::ConstVel, config).unwrap()
    }

    #[test]
    fn annealing_walks_the_step_size_down_across_planned_updates() {
        let mut trainer = small_trainer(true);
        assert_eq!(trainer.update_config().learning_rate, 1e-3);
        trainer.updates_done = 1;
        assert_eq!(trainer.update_config().learning_rate, 1e-3 * 0.75);
        trainer.updates_done = 3;
        assert_eq!(trainer.update_config().learning_rate, 1e-3 * 0.25);
    }

    #[test]
    fn step_size_stays_flat_without_annealing() {
        let mut trainer = small_trainer(false);
        trainer.updates_done = 3;
        assert_eq!(trainer.update_config().learning_rate, 1e-3);
    }
}
