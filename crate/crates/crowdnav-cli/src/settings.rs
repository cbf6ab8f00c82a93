//! Run settings assembled from a `key = value` configuration file.
//!
//! One key per line, `#` starts a comment, unknown keys are errors. Every
//! key has a default, so an empty or absent file yields the stock setup.
//! The network's prediction horizon always follows the simulator's.

use std::fmt::Write as _;
use std::path::Path;

use crowdnav_net::NetDims;
use crowdnav_sim::SimConfig;
use crowdnav_train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub dims: NetDims,
}

impl Default for Settings {
    fn default() -> Self {
        let sim = SimConfig::default();
        let dims = NetDims {
            horizon: sim.prediction_horizon,
            ..NetDims::default()
        };
        Settings {
            sim,
            train: TrainConfig::default(),
            dims,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, kind: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("key '{key}': cannot parse '{value}' as {kind}"))
}

fn apply(settings: &mut Settings, key: &str, value: &str) -> Result<(), String> {
    let f = |v: &str| parse_value::<f64>(key, v, "a number");
    let n = |v: &str| parse_value::<usize>(key, v, "a non-negative integer");
    let u = |v: &str| parse_value::<u64>(key, v, "a non-negative integer");
    let b = |v: &str| parse_value::<bool>(key, v, "true or false");
    match key {
        "arena_half_width" => settings.sim.arena_half_width = f(value)?,
        "sensor_range" => settings.sim.sensor_range = f(value)?,
        "max_humans" => settings.sim.max_humans = n(value)?,
        "dt" => settings.sim.dt = f(value)?,
        "max_steps" => settings.sim.max_steps = n(value)?,
        "randomize_traits" => settings.sim.randomize_traits = b(value)?,
        "goal_change_prob" => settings.sim.goal_change_prob = f(value)?,
        "prediction_horizon" => settings.sim.prediction_horizon = n(value)?,
        "history_len" => settings.sim.history_len = n(value)?,
        "robot_radius" => settings.sim.robot_radius = f(value)?,
        "rng_seed" => settings.sim.rng_seed = u(value)?,
        "fixed_scenario" => settings.sim.fixed_scenario = b(value)?,
        "num_envs" => settings.train.num_envs = n(value)?,
        "steps_per_update" => settings.train.steps_per_update = n(value)?,
        "total_steps" => settings.train.total_steps = n(value)?,
        "learning_rate" => settings.train.learning_rate = f(value)?,
        "anneal_lr" => settings.train.anneal_lr = b(value)?,
        "gamma" => settings.train.gamma = f(value)?,
        "gae_lambda" => settings.train.gae_lambda = f(value)?,
        "clip_eps" => settings.train.clip_eps = f(value)?,
        "value_coef" => settings.train.value_coef = f(value)?,
        "entropy_coef" => settings.train.entropy_coef = f(value)?,
        "epochs" => settings.train.epochs = n(value)?,
        "minibatches" => settings.train.minibatches = n(value)?,
        "max_grad_norm" => settings.train.max_grad_norm = f(value)?,
        "checkpoint_every" => settings.train.checkpoint_every = n(value)?,
        "seed" => settings.train.seed = u(value)?,
        "d_hh" => settings.dims.d_hh = n(value)?,
        "heads" => settings.dims.heads = n(value)?,
        "d_rh" => settings.dims.d_rh = n(value)?,
        "d_r" => settings.dims.d_r = n(value)?,
        "d_h" => settings.dims.d_h = n(value)?,
        other => return Err(format!("unknown key '{other}'")),
    }
    Ok(())
}

/// Parses configuration text into validated settings.
pub fn parse_settings(text: &str) -> Result<Settings, String> {
    let mut settings = Settings::default();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", index + 1))?;
        apply(&mut settings, key.trim(), value.trim())
            .map_err(|e| format!("line {}: {e}", index + 1))?;
    }
    settings.dims.horizon = settings.sim.prediction_horizon;
    settings.sim.validate().map_err(|e| e.to_string())?;
    settings.train.validate().map_err(|e| e.to_string())?;
    settings.dims.validate().map_err(|e| e.to_string())?;
    Ok(settings)
}

/// Reads and parses a configuration file; `None` means defaults.
pub fn load_settings(path: Option<&Path>) -> Result<Settings, String> {
    match path {
        None => Ok(Settings::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            parse_settings(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

/// Full snapshot of the settings in the same format `parse_settings` reads.
pub fn to_config_text(settings: &Settings) -> String {
    let mut out = String::new();
    let s = &settings.sim;
    let t = &settings.train;
    let d = &settings.dims;
    let _ = writeln!(out, "arena_half_width = {}", s.arena_half_width);
    let _ = writeln!(out, "sensor_range = {}", s.sensor_range);
    let _ = writeln!(out, "max_humans = {}", s.max_humans);
    let _ = writeln!(out, "dt = {}", s.dt);
    let _ = writeln!(out, "max_steps = {}", s.max_steps);
    let _ = writeln!(out, "randomize_traits = {}", s.randomize_traits);
    let _ = writeln!(out, "goal_change_prob = {}", s.goal_change_prob);
    let _ = writeln!(out, "prediction_horizon = {}", s.prediction_horizon);
    let _ = writeln!(out, "history_len = {}", s.history_len);
    let _ = writeln!(out, "robot_radius = {}", s.robot_radius);
    let _ = writeln!(out, "rng_seed = {}", s.rng_seed);
    let _ = writeln!(out, "fixed_scenario = {}", s.fixed_scenario);
    let _ = writeln!(out, "num_envs = {}", t.num_envs);
    let _ = writeln!(out, "steps_per_update = {}", t.steps_per_update);
    let _ = writeln!(out, "total_steps = {}", t.total_steps);
    let _ = writeln!(out, "learning_rate = {}", t.learning_rate);
    let _ = writeln!(out, "anneal_lr = {}", t.anneal_lr);
    let _ = writeln!(out, "gamma = {}", t.gamma);
    let _ = writeln!(out, "gae_lambda = {}", t.gae_lambda);
    let _ = writeln!(out, "clip_eps = {}", t.clip_eps);
    let _ = writeln!(out, "value_coef = {}", t.value_coef);
    let _ = writeln!(out, "entropy_coef = {}", t.entropy_coef);
    let _ = writeln!(out, "epochs = {}", t.epochs);
    let _ = writeln!(out, "minibatches = {}", t.minibatches);
    let _ = writeln!(out, "max_grad_norm = {}", t.max_grad_norm);
    let _ = writeln!(out, "checkpoint_every = {}", t.checkpoint_every);
    let _ = writeln!(out, "seed = {}", t.seed);
    let _ = writeln!(out, "d_hh = {}", d.d_hh);
    let _ = writeln!(out, "heads = {}", d.heads);
    let _ = writeln!(out, "d_rh = {}", d.d_rh);
    let _ = writeln!(out, "d_r = {}", d.d_r);
    let _ = writeln!(out, "d_h = {}", d.d_h);
    out
}

/// Writes `manifest.txt`: tool version, the command, any extra notes, and a
/// reloadable snapshot of every setting.
pub fn write_manifest(
    path: &Path,
    command: &str,
    notes: &[(&str, String)],
    settings: &Settings,
) -> std::io::Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "# crowdnav {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "# command: {command}");
    for (key, value) in notes {
        let _ = writeln!(text, "# {key}: {value}");
    }
    text.push('\n');
    text.push_str(&to_config_text(settings));
    std::fs::write(path, text)
}
