//! Episodic crowd navigation environment.
//!
//! Humans steer with ORCA and react only to each other, never to the robot,
//! so human trajectories depend solely on the seed and the scenario. The
//! robot senses humans within a fixed range, receives predicted future
//! positions for them, and is rewarded for goal progress while being
//! penalized for collisions and for standing inside positions humans are
//! about to occupy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::AgentState;
use crate::config::SimConfig;
use crate::episode::{
    EpisodeMeta, EpisodeOutcome, EpisodeRecord, HumanStep, OutcomeKind, RobotStep, StepRecord,
};
use crate::error::SimError;
use crate::orca::{orca_velocity, OrcaParams};
use crate::predict::{predict_const_vel, PredictedZones, PredictorKind, TrajectoryHistory, DEFAULT_ZONE_RADIUS};
use crate::reward::{full_reward, Disc, RewardContext};
use crate::vec2::Vec2;

/// Robot speed cap in m/s.
pub const ROBOT_V_MAX: f64 = 1.0;
/// Minimum clearance between sampled start positions, beyond the radii sum.
pub const SPAWN_CLEARANCE: f64 = 0.2;
/// Rejection-sampling attempts per agent before giving up on a scenario.
pub const PLACEMENT_ATTEMPTS: usize = 1000;

/// What the robot can see at one step: its own state plus the current and
/// predicted positions of humans inside the sensor range.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub robot: AgentState,
    /// One entry per human slot; entries for invisible humans are zero-filled
    /// and carry no information.
    pub humans: Vec<HumanObservation>,
    /// One flag per human slot; `false` marks an invisible human.
    pub visibility: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanObservation {
    pub position: Vec2,
    /// Predicted positions over the next K steps.
    pub predicted: Vec<Vec2>,
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<EpisodeOutcome>,
}

/// The simulator. All randomness flows from the reset seed, so identical
/// (config, seed, action sequence) triples reproduce episodes bit for bit.
#[derive(Debug, Clone)]
pub struct CrowdSim {
    config: SimConfig,
    orca_params: OrcaParams,
    predictor: PredictorKind,
    rng: ChaCha8Rng,
    robot: AgentState,
    humans: Vec<AgentState>,
    histories: Vec<TrajectoryHistory>,
    /// Ground-truth human positions over the next K steps, refreshed after
    /// every state change.
    futures_cache: Vec<Vec<Vec2>>,
    step_count: usize,
    cumulative_reward: f64,
    finished: Option<EpisodeOutcome>,
    episode_seed: u64,
    meta: EpisodeMeta,
    steps_log: Vec<StepRecord>,
}

impl CrowdSim {
    /// Builds a simulator and resets it with the config's seed.
    pub fn new(config: SimConfig, predictor: PredictorKind) -> Result<Self, SimError> {
        config.validate()?;
        let seed = config.rng_seed;
        let mut sim = CrowdSim::empty(config, predictor, seed);
        sim.reset(seed)?;
        Ok(sim)
    }

    /// Builds a simulator around explicit agent states instead of sampling a
    /// scenario; the seed still drives human goal resampling.
    pub fn from_states(
        config: SimConfig,
        predictor: PredictorKind,
        seed: u64,
        robot: AgentState,
        humans: Vec<AgentState>,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let mut sim = CrowdSim::empty(config, predictor, seed);
        sim.robot = robot;
        sim.humans = humans;
        sim.begin_episode();
        Ok(sim)
    }

    fn empty(config: SimConfig, predictor: PredictorKind, seed: u64) -> Self {
        CrowdSim {
            config,
            orca_params: OrcaParams::default(),
            predictor,
            rng: ChaCha8Rng::seed_from_u64(seed),
            robot: AgentState::new(Vec2::ZERO, Vec2::ZERO, ROBOT_V_MAX, 0.3),
            humans: Vec::new(),
            histories: Vec::new(),
            futures_cache: Vec::new(),
            step_count: 0,
            cumulative_reward: 0.0,
            finished: None,
            episode_seed: seed,
            meta: EpisodeMeta {
                seed,
                dt: 0.0,
                max_steps: 0,
                arena_half_width: 0.0,
                sensor_range: 0.0,
                robot_radius: 0.0,
                robot_start: Vec2::ZERO,
                goal: Vec2::ZERO,
                human_radii: Vec::new(),
                human_starts: Vec::new(),
            },
            steps_log: Vec::new(),
        }
    }

    /// Discards the current episode and samples a fresh scenario. With
    /// `fixed_scenario` set, the configured `rng_seed` replaces `seed` and
    /// every episode replays the same layout.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, SimError> {
        let seed = if self.config.fixed_scenario {
            self.config.rng_seed
        } else {
            seed
        };
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.episode_seed = seed;

        let robot_start = self.sample_point();
        let robot_goal = self.sample_point();
        self.robot = AgentState::new(robot_start, robot_goal, ROBOT_V_MAX, self.config.robot_radius);

        let mut placed: Vec<(Vec2, f64)> = vec![(robot_start, self.config.robot_radius)];
        let mut humans = Vec::with_capacity(self.config.max_humans);
        for agent in 0..self.config.max_humans {
            let (v_max, radius) = if self.config.randomize_traits {
                (self.rng.gen_range(0.5..1.5), self.rng.gen_range(0.3..0.5))
            } else {
                (1.0, 0.3)
            };
            let mut start = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let candidate = self.sample_point();
                let clear = placed.iter().all(|&(other, other_r)| {
                    candidate.distance(other) >= radius + other_r + SPAWN_CLEARANCE
                });
                if clear {
                    start = Some(candidate);
                    break;
                }
            }
            let start = start.ok_or(SimError::PlacementFailed {
                agent,
                attempts: PLACEMENT_ATTEMPTS,
            })?;
            placed.push((start, radius));
            let goal = self.sample_point();
            humans.push(AgentState::new(start, goal, v_max, radius));
        }
        self.humans = humans;
        self.begin_episode();
        Ok(self.observe())
    }

    fn begin_episode(&mut self) {
        self.step_count = 0;
        self.cumulative_reward = 0.0;
        self.finished = None;
        self.meta = EpisodeMeta {
            seed: self.episode_seed,
            dt: self.config.dt,
            max_steps: self.config.max_steps,
            arena_half_width: self.config.arena_half_width,
            sensor_range: self.config.sensor_range,
            robot_radius: self.robot.radius,
            robot_start: self.robot.position,
            goal: self.robot.goal,
            human_radii: self.humans.iter().map(|h| h.radius).collect(),
            human_starts: self.humans.iter().map(|h| h.position).collect(),
        };
        self.steps_log = Vec::new();
        self.histories = (0..self.humans.len())
            .map(|_| TrajectoryHistory::new(self.config.history_len))
            .collect();
        for i in 0..self.humans.len() {
            let observed = self.visible(i).then(|| self.humans[i].position);
            self.histories[i].push(observed);
        }
        self.futures_cache = self.roll_humans(self.config.prediction_horizon);
    }

    /// Applies the robot action, advances every human one step, and scores
    /// the transition. The commanded velocity is clamped to the robot's
    /// speed cap before integration.
    pub fn step(&mut self, action: Vec2) -> Result<StepOutput, SimError> {
        if self.finished.is_some() {
            return Err(SimError::EpisodeFinished);
        }
        let applied = action.clamp_length(self.robot.v_max);
        let goal_dist_prev = self.robot.distance_to_goal();

        advance_humans(&mut self.humans, &mut self.rng, &self.config, &self.orca_params);
        self.robot.position += applied * self.config.dt;
        self.robot.velocity = applied;
        if applied.length_squared() > 0.0 {
            self.robot.heading = applied.y.atan2(applied.x);
        }
        self.step_count += 1;

        let reached_goal = self.robot.distance_to_goal() < self.robot.radius;
        let collided = !reached_goal
            && self.humans.iter().any(|h| {
                self.robot.position.distance(h.position) < self.robot.radius + h.radius
            });

        self.futures_cache = self.roll_humans(self.config.prediction_horizon);
        for i in 0..self.humans.len() {
            let observed = self.visible(i).then(|| self.humans[i].position);
            self.histories[i].push(observed);
        }

        let ctx = RewardContext {
            robot: Disc::new(self.robot.position, self.robot.radius),
            humans: self
                .humans
                .iter()
                .map(|h| Disc::new(h.position, h.radius))
                .collect(),
            futures: self
                .futures_cache
                .iter()
                .zip(&self.humans)
                .map(|(future, h)| future.iter().map(|&p| Disc::new(p, h.radius)).collect())
                .collect(),
            goal_dist_prev,
            goal_dist_cur: self.robot.distance_to_goal(),
            reached_goal,
            collided,
        };
        let reward = full_reward(&ctx)?;
        self.cumulative_reward += reward;

        let done = reached_goal || collided || self.step_count >= self.config.max_steps;
        if done {
            let kind = if reached_goal {
                OutcomeKind::ReachedGoal
            } else if collided {
                OutcomeKind::Collision
            } else {
                OutcomeKind::Timeout
            };
            self.finished = Some(EpisodeOutcome {
                kind,
                steps: self.step_count,
                cumulative_reward: self.cumulative_reward,
            });
        }

        let zones = self.predicted_zones();
        self.steps_log.push(StepRecord {
            t: self.step_count,
            robot: RobotStep {
                px: self.robot.position.x,
                py: self.robot.position.y,
                vx: self.robot.velocity.x,
                vy: self.robot.velocity.y,
            },
            humans: self
                .humans
                .iter()
                .enumerate()
                .map(|(id, h)| HumanStep {
                    id,
                    px: h.position.x,
                    py: h.position.y,
                    visible: self.visible(id),
                })
                .collect(),
            action: [action.x, action.y],
            reward,
            gt_futures: self
                .futures_cache
                .iter()
                .map(|future| future.iter().map(|p| [p.x, p.y]).collect())
                .collect(),
            preds: zones
                .iter()
                .map(|z| {
                    z.as_ref()
                        .map(|z| z.centers.iter().map(|p| [p.x, p.y]).collect())
                })
                .collect(),
        });

        Ok(StepOutput {
            observation: self.observe_with_zones(&zones),
            reward,
            done,
            outcome: self.finished.clone(),
        })
    }

    /// Current observation; pure and repeatable.
    pub fn observe(&self) -> Observation {
        let zones = self.predicted_zones();
        self.observe_with_zones(&zones)
    }

    fn observe_with_zones(&self, zones: &[Option<PredictedZones>]) -> Observation {
        let horizon = self.config.prediction_horizon;
        let humans = self
            .humans
            .iter()
            .zip(zones)
            .map(|(h, zone)| match zone {
                Some(zone) => HumanObservation {
                    position: h.position,
                    predicted: zone.centers.clone(),
                },
                None => HumanObservation {
                    position: Vec2::ZERO,
                    predicted: vec![Vec2::ZERO; horizon],
                },
            })
            .collect();
        Observation {
            robot: self.robot,
            humans,
            visibility: (0..self.humans.len()).map(|i| self.visible(i)).collect(),
        }
    }

    fn predicted_zones(&self) -> Vec<Option<PredictedZones>> {
        let horizon = self.config.prediction_horizon;
        (0..self.humans.len())
            .map(|i| {
                if !self.visible(i) {
                    return None;
                }
                let position = self.humans[i].position;
                let zones = match self.predictor {
                    PredictorKind::None => PredictedZones {
                        centers: vec![position; horizon],
                        radius: DEFAULT_ZONE_RADIUS,
                    },
                    PredictorKind::ConstVel => {
                        predict_const_vel(&self.histories[i], self.config.dt, horizon)
                            .unwrap_or(PredictedZones {
                                centers: vec![position; horizon],
                                radius: DEFAULT_ZONE_RADIUS,
                            })
                    }
                    PredictorKind::Oracle => PredictedZones {
                        centers: self.futures_cache[i].clone(),
                        radius: DEFAULT_ZONE_RADIUS,
                    },
                };
                Some(zones)
            })
            .collect()
    }

    /// Positions each human will occupy after 1..=horizon further steps,
    /// with the robot frozen. Does not mutate live state.
    pub fn future_positions(&self, horizon: usize) -> Vec<Vec<Vec2>> {
        self.roll_humans(horizon)
    }

    /// Positions each human will occupy after exactly `k` further steps;
    /// `k = 0` returns the current positions.
    pub fn positions_after(&self, k: usize) -> Vec<Vec2> {
        if k == 0 {
            return self.humans.iter().map(|h| h.position).collect();
        }
        self.roll_humans(k)
            .into_iter()
            .map(|future| future[k - 1])
            .collect()
    }

    fn roll_humans(&self, horizon: usize) -> Vec<Vec<Vec2>> {
        let mut humans = self.humans.clone();
        let mut rng = self.rng.clone();
        let mut out: Vec<Vec<Vec2>> = vec![Vec::with_capacity(horizon); humans.len()];
        for _ in 0..horizon {
            advance_humans(&mut humans, &mut rng, &self.config, &self.orca_params);
            for (trace, h) in out.iter_mut().zip(&humans) {
                trace.push(h.position);
            }
        }
        out
    }

    fn visible(&self, human: usize) -> bool {
        self.robot.position.distance(self.humans[human].position) <= self.config.sensor_range
    }

    fn sample_point(&mut self) -> Vec2 {
        let hw = self.config.arena_half_width;
        Vec2::new(self.rng.gen_range(-hw..hw), self.rng.gen_range(-hw..hw))
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn predictor(&self) -> PredictorKind {
        self.predictor
    }

    pub fn robot_state(&self) -> &AgentState {
        &self.robot
    }

    pub fn human_states(&self) -> &[AgentState] {
        &self.humans
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_finished(&self) -> bool {
        self.finished.is_some()
    }

    pub fn outcome(&self) -> Option<&EpisodeOutcome> {
        self.finished.as_ref()
    }

    /// Full trajectory log of the finished episode.
    pub fn episode_record(&self) -> Option<EpisodeRecord> {
        self.finished.as_ref().map(|outcome| EpisodeRecord {
            meta: self.meta.clone(),
            steps: self.steps_log.clone(),
            outcome: outcome.clone(),
        })
    }
}

/// Advances every human one step: ORCA velocities from a simultaneous
/// snapshot, explicit integration, then goal resampling. Humans never see
/// the robot.
fn advance_humans(
    humans: &mut [AgentState],
    rng: &mut ChaCha8Rng,
    config: &SimConfig,
    orca_params: &OrcaParams,
) {
    let snapshot: Vec<AgentState> = humans.to_vec();
    let mut neighbors: Vec<AgentState> = Vec::with_capacity(snapshot.len().saturating_sub(1));
    for (i, human) in humans.iter_mut().enumerate() {
        neighbors.clear();
        neighbors.extend(
            snapshot
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, h)| *h),
        );
        let velocity = orca_velocity(human, &neighbors, orca_params, config.dt);
        human.position += velocity * config.dt;
        human.velocity = velocity;
        if velocity.length_squared() > 0.0 {
            human.heading = velocity.y.atan2(velocity.x);
        }
    }
    let hw = config.arena_half_width;
    for human in humans.iter_mut() {
        let wander = config.randomize_traits && config.goal_change_prob > 0.0;
        if human.distance_to_goal() < human.radius
            || (wander && rng.gen::<f64>() < config.goal_change_prob)
        {
            human.goal = Vec2::new(rng.gen_range(-hw..hw), rng.gen_range(-hw..hw));
        }
    }
}
