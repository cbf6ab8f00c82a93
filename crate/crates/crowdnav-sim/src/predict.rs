//! Human trajectory prediction from observed position histories.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::vec2::Vec2;

/// Zone radius used for predicted positions when the true human radius is
/// not observable.
pub const DEFAULT_ZONE_RADIUS: f64 = 0.3;

/// Which predictor fills the observation's predicted positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorKind {
    /// No motion extrapolation: every predicted position repeats the current one.
    None,
    /// Constant-velocity extrapolation from the last two observed positions.
    ConstVel,
    /// Ground-truth futures from the simulator (upper bound for diagnostics).
    Oracle,
}

/// Predicted future positions of one human, each padded to a disc of
/// `radius` for intrusion checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedZones {
    pub centers: Vec<Vec2>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HistoryEntry {
    position: Vec2,
    valid: bool,
}

/// Ring buffer of the last M+1 observed positions of one human.
///
/// Steps where the human was out of the sensor range are recorded as invalid
/// entries; when the human re-enters, the history restarts so stale motion
/// from before the gap never leaks into velocity estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryHistory {
    entries: VecDeque<HistoryEntry>,
    capacity: usize,
}

impl TrajectoryHistory {
    pub fn new(history_len: usize) -> Self {
        TrajectoryHistory {
            entries: VecDeque::with_capacity(history_len + 1),
            capacity: history_len + 1,
        }
    }

    /// Appends one step of history: `Some(position)` when observed, `None`
    /// when the human was outside the sensor range.
    pub fn push(&mut self, observed: Option<Vec2>) {
        match observed {
            Some(position) => {
                if self.entries.back().is_some_and(|e| !e.valid) {
                    self.entries.clear();
                }
                self.entries.push_back(HistoryEntry { position, valid: true });
            }
            None => self.entries.push_back(HistoryEntry {
                position: Vec2::ZERO,
                valid: false,
            }),
        }
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Most recently observed position, if the human has ever been seen.
    pub fn last_valid(&self) -> Option<Vec2> {
        self.entries.iter().rev().find(|e| e.valid).map(|e| e.position)
    }

    /// Velocity estimated from the last two observed positions; zero when
    /// fewer than two are available.
    pub fn estimate_velocity(&self, dt: f64) -> Vec2 {
        let mut newest: Option<(usize, Vec2)> = None;
        for (idx, entry) in self.entries.iter().enumerate().rev() {
            if !entry.valid {
                continue;
            }
            match newest {
                None => newest = Some((idx, entry.position)),
                Some((newest_idx, newest_pos)) => {
                    let steps = (newest_idx - idx) as f64;
                    return (newest_pos - entry.position) / (steps * dt);
                }
            }
        }
        Vec2::ZERO
    }
}

/// Constant-velocity prediction over `horizon` steps. Returns `None` when
/// the human has never been observed.
pub fn predict_const_vel(history: &TrajectoryHistory, dt: f64, horizon: usize) -> Option<PredictedZones> {
    let position = history.last_valid()?;
    let velocity = history.estimate_velocity(dt);
    let centers = (1..=horizon)
        .map(|k| position + velocity * (k as f64 * dt))
        .collect();
    Some(PredictedZones {
        centers,
        radius: DEFAULT_ZONE_RADIUS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation_predicts_standing_still() {
        let mut history = TrajectoryHistory::new(5);
        history.push(Some(Vec2::new(1.0, 2.0)));
        let zones = predict_const_vel(&history, 0.25, 5).unwrap();
        assert_eq!(zones.centers.len(), 5);
        for center in zones.centers {
            assert_eq!(center, Vec2::new(1.0, 2.0));
        }
    }

    #[test]
    fn two_observations_extrapolate_linearly() {
        let mut history = TrajectoryHistory::new(5);
        history.push(Some(Vec2::ZERO));
        history.push(Some(Vec2::new(0.25, 0.0)));
        assert_eq!(history.estimate_velocity(0.25), Vec2::new(1.0, 0.0));
        let zones = predict_const_vel(&history, 0.25, 3).unwrap();
        assert_eq!(zones.centers[0], Vec2::new(0.5, 0.0));
        assert_eq!(zones.centers[1], Vec2::new(0.75, 0.0));
        assert_eq!(zones.centers[2], Vec2::new(1.0, 0.0));
    }

    #[test]
    fn unseen_human_has_no_prediction() {
        let mut history = TrajectoryHistory::new(5);
        history.push(None);
        assert!(predict_const_vel(&history, 0.25, 5).is_none());
    }

    #[test]
    fn reentry_resets_the_history() {
        let mut history = TrajectoryHistory::new(5);
        history.push(Some(Vec2::ZERO));
        history.push(Some(Vec2::new(0.25, 0.0)));
        history.push(None);
        history.push(Some(Vec2::new(3.0, 3.0)));
        // Motion from before the gap must not contribute.
        assert_eq!(history.estimate_velocity(0.25), Vec2::ZERO);
        let zones = predict_const_vel(&history, 0.25, 2).unwrap();
        assert_eq!(zones.centers[0], Vec2::new(3.0, 3.0));
    }

    #[test]
    fn history_is_bounded() {
        let mut history = TrajectoryHistory::new(2);
        for i in 0..10 {
            history.push(Some(Vec2::new(i as f64, 0.0)));
        }
        assert_eq!(history.entries.len(), 3);
        assert_eq!(history.last_valid(), Some(Vec2::new(9.0, 0.0)));
    }
}
