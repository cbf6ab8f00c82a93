//! Benchmark metrics over recorded episodes.
//!
//! All metrics are pure functions of episode records, so live evaluation and
//! replays of logged files produce identical numbers. Success rate and
//! intrusion ratio are percentages; navigation time, path length, and social
//! distance average only over the episodes or steps where they are defined.

use crowdnav_sim::reward::{intrusion_indicator, Disc};
use crowdnav_sim::{EpisodeMeta, EpisodeRecord, OutcomeKind, StepRecord, Vec2};

/// Intrusion test for one recorded step: does the robot disc overlap any
/// human's ground-truth future position within the horizon? Also reports the
/// smallest center distance to any of those future positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowIntrusion {
    pub intruded: bool,
    pub min_center_distance: f64,
}

pub fn row_intrusion(meta: &EpisodeMeta, step: &StepRecord) -> RowIntrusion {
    let robot = Disc::new(step.robot_position(), meta.robot_radius);
    let mut intruded = false;
    let mut min_distance = f64::INFINITY;
    for (h, futures) in step.gt_futures.iter().enumerate() {
        let radius = meta.human_radii[h];
        for p in futures {
            let center = Vec2::new(p[0], p[1]);
            let distance = (center - robot.center).length();
            min_distance = min_distance.min(distance);
            if intrusion_indicator(robot, Disc::new(center, radius)) {
                intruded = true;
            }
        }
    }
    RowIntrusion {
        intruded,
        min_center_distance: min_distance,
    }
}

/// Fraction of an episode's steps that intrude into some predicted position,
/// in [0, 1].
pub fn intrusion_fraction(record: &EpisodeRecord) -> f64 {
    if record.steps.is_empty() {
        return 0.0;
    }
    let intrusions = record
        .steps
        .iter()
        .filter(|s| row_intrusion(&record.meta, s).intruded)
        .count();
    intrusions as f64 / record.steps.len() as f64
}

/// Robot path length of one episode, from the start position through every
/// recorded step.
pub fn path_length(record: &EpisodeRecord) -> f64 {
    let mut previous = record.meta.robot_start;
    let mut length = 0.0;
    for step in &record.steps {
        let position = step.robot_position();
        length += (position - previous).length();
        previous = position;
    }
    length
}

/// Aggregate benchmark numbers over a set of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub episodes: usize,
    /// Percentage of episodes that reached the goal.
    pub success_rate: f64,
    /// Mean seconds to reach the goal, over successful episodes.
    pub navigation_time: Option<f64>,
    /// Mean robot path length in meters, over successful episodes.
    pub path_length: Option<f64>,
    /// Mean percentage of steps intruding into predicted human positions.
    pub intrusion_ratio: f64,
    /// Mean center distance to the closest predicted human position, pooled
    /// over every intruding step of every episode.
    pub social_distance: Option<f64>,
}

pub fn evaluate_records(records: &[EpisodeRecord]) -> MetricsReport {
    let episodes = records.len();
    let mut successes = 0usize;
    let mut time_sum = 0.0;
    let mut length_sum = 0.0;
    let mut intrusion_sum = 0.0;
    let mut distance_sum = 0.0;
    let mut intrusion_steps = 0usize;
    for record in records {
        if record.outcome.kind == OutcomeKind::ReachedGoal {
            successes += 1;
            time_sum += record.outcome.steps as f64 * record.meta.dt;
            length_sum += path_length(record);
        }
        intrusion_sum += intrusion_fraction(record);
        for step in &record.steps {
            let row = row_intrusion(&record.meta, step);
            if row.intruded {
                intrusion_steps += 1;
                distance_sum += row.min_center_distance;
            }
        }
    }
    MetricsReport {
        episodes,
        success_rate: if episodes > 0 {
            100.0 * successes as f64 / episodes as f64
        } else {
            0.0
        },
        navigation_time: (successes > 0).then(|| time_sum / successes as f64),
        path_length: (successes > 0).then(|| length_sum / successes as f64),
        intrusion_ratio: if episodes > 0 {
            100.0 * intrusion_sum / episodes as f64
        } else {
            0.0
        },
        social_distance: (intrusion_steps > 0).then(|| distance_sum / intrusion_steps as f64),
    }
}

impl MetricsReport {
    /// Aligned two-column table for terminals and report files.
    pub fn table(&self) -> String {
        let fmt = |value: Option<f64>| match value {
            Some(v) => format!("{v:.6}"),
            None => "n/a".to_string(),
        };
        let rows = [
            ("episodes".to_string(), self.episodes.to_string()),
            (
                "success_rate (%)".to_string(),
                format!("{:.6}", self.success_rate),
            ),
            ("nav_time (s)".to_string(), fmt(self.navigation_time)),
            ("path_length (m)".to_string(), fmt(self.path_length)),
            (
                "intrusion_ratio (%)".to_string(),
                format!("{:.6}", self.intrusion_ratio),
            ),
            ("social_distance (m)".to_string(), fmt(self.social_distance)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (key, value) in rows {
            out.push_str(&format!("{key:width$}  {value}\n"));
        }
        out
    }

    pub const CSV_HEADER: &'static str =
        "episodes,success_rate,nav_time,path_length,intrusion_ratio,social_distance";

    /// One CSV row matching `CSV_HEADER`; undefined metrics stay empty.
    pub fn csv_row(&self) -> String {
        let fmt = |value: Option<f64>| value.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{:.6},{},{},{:.6},{}",
            self.episodes,
            self.success_rate,
            fmt(self.navigation_time),
            fmt(self.path_length),
            self.intrusion_ratio,
            fmt(self.social_distance)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crowdnav_sim::episode::derive_outcome;

    fn meta(goal: Vec2, human_radii: Vec<f64>) -> EpisodeMeta {
        EpisodeMeta {
            seed: 0,
            dt: 0.25,
            max_steps: 50,
            arena_half_width: 6.0,
            sensor_range: 5.0,
            robot_radius: 0.3,
            robot_start: Vec2::ZERO,
            goal,
            human_starts: vec![Vec2::new(3.0, 3.0); human_radii.len()],
            human_radii,
        }
    }

    fn step(t: usize, robot: Vec2, futures: Vec<Vec<[f64; 2]>>) -> StepRecord {
        StepRecord {
            t,
            robot: crowdnav_sim::episode::RobotStep {
                px: robot.x,
                py: robot.y,
                vx: 0.0,
                vy: 0.0,
            },
            humans: futures
                .iter()
                .enumerate()
                .map(|(id, _)| crowdnav_sim::episode::HumanStep {
                    id,
                    px: 3.0,
                    py: 3.0,
                    visible: true,
                })
                .collect(),
            action: [0.0, 0.0],
            reward: 0.0,
            gt_futures: futures,
            preds: vec![],
        }
    }

    fn record(meta: EpisodeMeta, steps: Vec<StepRecord>) -> EpisodeRecord {
        let outcome = derive_outcome(&meta, &steps).unwrap();
        EpisodeRecord {
            meta,
            steps,
            outcome,
        }
    }

    #[test]
    fn success_only_averages_cover_time_and_length() {
        // Success: two straight 1 m steps onto the goal.
        let success = record(
            meta(Vec2::new(2.0, 0.0), vec![0.3]),
            vec![
                step(1, Vec2::new(1.0, 0.0), vec![vec![[9.0, 9.0]]]),
                step(2, Vec2::new(2.0, 0.0), vec![vec![[9.0, 9.0]]]),
            ],
        );
        // Timeout: wanders one step and stalls far from the goal.
        let timeout = record(
            meta(Vec2::new(5.0, 5.0), vec![0.3]),
            vec![
                step(1, Vec2::new(0.5, 0.0), vec![vec![[9.0, 9.0]]]),
                step(2, Vec2::new(0.5, 0.0), vec![vec![[9.0, 9.0]]]),
            ],
        );
        let report = evaluate_records(&[success, timeout]);
        assert_eq!(report.episodes, 2);
        assert!((report.success_rate - 50.0).abs() <= 1e-12);
        assert!((report.navigation_time.unwrap() - 0.5).abs() <= 1e-12);
        assert!((report.path_length.unwrap() - 2.0).abs() <= 1e-12);
        assert_eq!(report.social_distance, None);
        assert!((report.intrusion_ratio - 0.0).abs() <= 1e-12);
    }

    #[test]
    fn intrusions_pool_distances_across_episodes() {
        // One of two steps intrudes: the future position 0.5 m away overlaps
        // the 0.3 + 0.3 contact distance.
        let episode = record(
            meta(Vec2::new(9.0, 9.0), vec![0.3]),
            vec![
                step(1, Vec2::ZERO, vec![vec![[0.5, 0.0], [3.0, 0.0]]]),
                step(2, Vec2::ZERO, vec![vec![[2.0, 0.0], [3.0, 0.0]]]),
            ],
        );
        let report = evaluate_records(&[episode]);
        assert!((report.intrusion_ratio - 50.0).abs() <= 1e-12);
        assert!((report.social_distance.unwrap() - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn no_successes_leave_means_undefined() {
        let timeout = record(
            meta(Vec2::new(5.0, 5.0), vec![]),
            vec![step(1, Vec2::new(0.1, 0.0), vec![])],
        );
        let report = evaluate_records(&[timeout]);
        assert_eq!(report.navigation_time, None);
        assert_eq!(report.path_length, None);
        assert_eq!(report.social_distance, None);
        assert_eq!(report.success_rate, 0.0);
    }

    #[test]
    fn csv_row_matches_header_arity() {
        let report = evaluate_records(&[]);
        let header_fields = MetricsReport::CSV_HEADER.split(',').count();
        assert_eq!(report.csv_row().split(',').count(), header_fields);
    }

    #[test]
    fn table_lists_every_metric() {
        let report = evaluate_records(&[]);
        let table = report.table();
        for key in [
            "episodes",
            "success_rate",
            "nav_time",
            "path_length",
            "intrusion_ratio",
            "social_distance",
        ] {
            assert!(table.contains(key), "missing {key} in table:\n{table}");
        }
    }
}
