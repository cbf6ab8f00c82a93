//! Rolling controllers through full episodes for evaluation.

use crowdnav_sim::{CrowdSim, EpisodeRecord, PredictorKind, RobotController, SimConfig};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::TrainError;

/// Plays one episode to termination and returns its full record.
pub fn run_episode(
    config: &SimConfig,
    predictor: PredictorKind,
    controller: &mut dyn RobotController,
    seed: u64,
) -> Result<EpisodeRecord, TrainError> {
    let mut sim = CrowdSim::new(config.clone(), predictor)?;
    let mut observation = sim.reset(seed)?;
    controller.begin_episode(seed);
    while !sim.is_finished() {
        let action = controller.act(&observation, config.dt);
        let output = sim.step(action)?;
        observation = output.observation;
    }
    Ok(sim
        .episode_record()
        .expect("finished episode has a record"))
}

/// Runs one episode per seed, each with a controller built fresh from the
/// factory. Results follow seed order.
pub fn run_batch<F>(
    config: &SimConfig,
    predictor: PredictorKind,
    make_controller: F,
    seeds: &[u64],
) -> Result<Vec<EpisodeRecord>, TrainError>
where
    F: Fn() -> Box<dyn RobotController + Send> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut controller = make_controller();
                run_episode(config, predictor, controller.as_mut(), seed)
            })
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_serial(config, predictor, make_controller, seeds)
    }
}

/// Sequential twin of `run_batch`, kept available under every feature set so
/// the two can be compared directly.
pub fn run_batch_serial<F>(
    config: &SimConfig,
    predictor: PredictorKind,
    make_controller: F,
    seeds: &[u64],
) -> Result<Vec<EpisodeRecord>, TrainError>
where
    F: Fn() -> Box<dyn RobotController + Send> + Sync,
{
    seeds
        .iter()
        .map(|&seed| {
            let mut controller = make_controller();
            run_episode(config, predictor, controller.as_mut(), seed)
        })
        .collect()
}
