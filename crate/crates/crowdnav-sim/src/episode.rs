//! Episode logs: per-step trajectory records with ground-truth future
//! positions, written as JSONL (one header line, then one object per step).
//!
//! Logs carry everything needed to recompute benchmark metrics offline, so a
//! written file round-trips to the exact same report as the live run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::vec2::Vec2;

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    ReachedGoal,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub kind: OutcomeKind,
    pub steps: usize,
    pub cumulative_reward: f64,
}

/// Header line of an episode log: scenario constants and initial positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub seed: u64,
    pub dt: f64,
    pub max_steps: usize,
    pub arena_half_width: f64,
    pub sensor_range: f64,
    pub robot_radius: f64,
    pub robot_start: Vec2,
    pub goal: Vec2,
    pub human_radii: Vec<f64>,
    pub human_starts: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotStep {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanStep {
    pub id: usize,
    pub px: f64,
    pub py: f64,
    pub visible: bool,
}

/// State after one executed step, plus the action and reward that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: usize,
    pub robot: RobotStep,
    pub humans: Vec<HumanStep>,
    /// Raw commanded action before the speed clamp.
    pub action: [f64; 2],
    pub reward: f64,
    /// Ground-truth positions each human will occupy over the next K steps.
    pub gt_futures: Vec<Vec<[f64; 2]>>,
    /// Predictor output per human slot; absent outside the sensor range.
    pub preds: Vec<Option<Vec<[f64; 2]>>>,
}

impl StepRecord {
    pub fn robot_position(&self) -> Vec2 {
        Vec2::new(self.robot.px, self.robot.py)
    }
}

/// One fully logged episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub meta: EpisodeMeta,
    pub steps: Vec<StepRecord>,
    pub outcome: EpisodeOutcome,
}

/// Reconstructs the outcome from the logged trajectory alone. The goal test
/// takes precedence over the collision test, mirroring the simulator.
pub fn derive_outcome(meta: &EpisodeMeta, steps: &[StepRecord]) -> Result<EpisodeOutcome, SimError> {
    let last = steps.last().ok_or(SimError::EmptyLog)?;
    let robot = last.robot_position();
    let kind = if robot.distance(meta.goal) < meta.robot_radius {
        OutcomeKind::ReachedGoal
    } else if last.humans.iter().any(|h| {
        let radius = meta
            .human_radii
            .get(h.id)
            .copied()
            .unwrap_or(f64::INFINITY);
        robot.distance(Vec2::new(h.px, h.py)) < meta.robot_radius + radius
    }) {
        OutcomeKind::Collision
    } else {
        OutcomeKind::Timeout
    };
    let cumulative_reward = steps.iter().map(|s| s.reward).sum();
    Ok(EpisodeOutcome {
        kind,
        steps: steps.len(),
        cumulative_reward,
    })
}

/// Writes an episode as JSONL: the meta header, then one line per step.
pub fn write_episode<W: Write>(record: &EpisodeRecord, mut writer: W) -> Result<(), SimError> {
    let meta =
        serde_json::to_string(&record.meta).map_err(|e| SimError::Parse(e.to_string()))?;
    writeln!(writer, "{meta}")?;
    for step in &record.steps {
        let line = serde_json::to_string(step).map_err(|e| SimError::Parse(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn write_episode_to_path<P: AsRef<Path>>(record: &EpisodeRecord, path: P) -> Result<(), SimError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_episode(record, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Reads a JSONL episode log and rederives its outcome from the trajectory.
pub fn read_episode<R: BufRead>(reader: R) -> Result<EpisodeRecord, SimError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(SimError::EmptyLog)??;
    let meta: EpisodeMeta =
        serde_json::from_str(&header).map_err(|e| SimError::Parse(format!("header: {e}")))?;
    let mut steps = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let step: StepRecord = serde_json::from_str(&line)
            .map_err(|e| SimError::Parse(format!("step line {}: {e}", idx + 2)))?;
        steps.push(step);
    }
    let outcome = derive_outcome(&meta, &steps)?;
    Ok(EpisodeRecord { meta, steps, outcome })
}

pub fn read_episode_from_path<P: AsRef<Path>>(path: P) -> Result<EpisodeRecord, SimError> {
    read_episode(BufReader::new(File::open(path)?))
}
