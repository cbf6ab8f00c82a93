//! Subcommand implementations and their argument structs.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use crowdnav_net::checkpoint::load_params_from_path;
use crowdnav_net::{PolicyController, PolicyParams};
use crowdnav_sim::episode::{read_episode_from_path, write_episode_to_path};
use crowdnav_sim::{
    OrcaController, PredictorKind, RandomController, RobotController, SocialForceController,
};
use crowdnav_train::{evaluate_records, run_batch, MetricsReport, TrainError, Trainer};

use crate::render::render_episode;
use crate::settings::{load_settings, write_manifest};

/// Failures split by exit code: configuration problems exit 2, everything
/// else exits 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::Config(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn config_err(msg: String) -> CliError {
    CliError::Config(msg)
}

fn runtime<E: fmt::Display>(err: E) -> CliError {
    CliError::Runtime(err.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    /// Constant-velocity extrapolation.
    Constvel,
    /// Ground-truth futures from the simulator.
    Oracle,
    /// No extrapolation; predictions repeat the current position.
    None,
}

impl From<PredictorArg> for PredictorKind {
    fn from(arg: PredictorArg) -> Self {
        match arg {
            PredictorArg::Constvel => PredictorKind::ConstVel,
            PredictorArg::Oracle => PredictorKind::Oracle,
            PredictorArg::None => PredictorKind::None,
        }
    }
}

impl fmt::Display for PredictorArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PredictorArg::Constvel => "constvel",
            PredictorArg::Oracle => "oracle",
            PredictorArg::None => "none",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    /// Reciprocal collision avoidance against tracked humans.
    Orca,
    /// Social-force steering against tracked humans.
    Sf,
    /// Uniform random velocities.
    Random,
}

impl fmt::Display for BaselineArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BaselineArg::Orca => "orca",
            BaselineArg::Sf => "sf",
            BaselineArg::Random => "random",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the log, checkpoints, and manifest
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured training seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resume from a saved checkpoint instead of fresh parameters
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Human motion predictor feeding the policy
    #[arg(long, value_enum, default_value_t = PredictorArg::Constvel)]
    pub predictor: PredictorArg,
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut settings = load_settings(args.config.as_deref()).map_err(config_err)?;
    if let Some(seed) = args.seed {
        settings.train.seed = seed;
    }
    let predictor: PredictorKind = args.predictor.into();

    let mut trainer = match &args.checkpoint {
        Some(path) => {
            let params = load_params_from_path(path)
                .map_err(|e| config_err(format!("checkpoint {}: {e}", path.display())))?;
            Trainer::with_params(
                settings.sim.clone(),
                params,
                predictor,
                settings.train.clone(),
            )?
        }
        None => Trainer::new(
            settings.sim.clone(),
            settings.dims,
            predictor,
            settings.train.clone(),
        )?,
    };

    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    let mut notes = vec![
        ("predictor", args.predictor.to_string()),
        ("seed", settings.train.seed.to_string()),
    ];
    if let Some(path) = &args.checkpoint {
        notes.push(("resumed_from", path.display().to_string()));
    }
    write_manifest(&args.out.join("manifest.txt"), "train", &notes, &settings)
        .map_err(runtime)?;

    let outcome = trainer.run(&args.out)?;
    println!(
        "finished {} updates over {} environment steps",
        outcome.updates, outcome.env_steps
    );
    if let (Some(reward), Some(success)) = (
        trainer.recent_mean_reward(),
        trainer.recent_success_rate(),
    ) {
        println!("recent episodes: mean reward {reward:.3}, success rate {success:.1}%");
    }
    println!(
        "final checkpoint: {}",
        args.out.join("checkpoint_final.txt").display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the report, episode logs, and manifest
    #[arg(long)]
    pub out: PathBuf,
    /// Base seed; episode i runs with seed base + i
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of evaluation episodes
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Evaluate the policy stored in this checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate a scripted baseline instead of a checkpoint
    #[arg(long, value_enum, conflicts_with = "checkpoint")]
    pub baseline: Option<BaselineArg>,
    /// Human motion predictor visible to the controller
    #[arg(long, value_enum, default_value_t = PredictorArg::Constvel)]
    pub predictor: PredictorArg,
}

enum ControllerChoice {
    Policy(Box<PolicyParams>),
    Baseline(BaselineArg),
}

impl ControllerChoice {
    fn describe(&self) -> String {
        match self {
            ControllerChoice::Policy(_) => "policy checkpoint".to_string(),
            ControllerChoice::Baseline(b) => format!("baseline {b}"),
        }
    }

    fn build(&self) -> Box<dyn RobotController + Send> {
        match self {
            ControllerChoice::Policy(params) => Box::new(
                PolicyController::new(params).expect("checkpoint parameters validated on load"),
            ),
            ControllerChoice::Baseline(BaselineArg::Orca) => {
                Box::new(OrcaController::default())
            }
            ControllerChoice::Baseline(BaselineArg::Sf) => {
                Box::new(SocialForceController::default())
            }
            ControllerChoice::Baseline(BaselineArg::Random) => {
                Box::new(RandomController::new(0))
            }
        }
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let settings = load_settings(args.config.as_deref()).map_err(config_err)?;
    if args.episodes == 0 {
        return Err(config_err("--episodes must be positive".into()));
    }
    let choice = match (&args.checkpoint, args.baseline) {
        (Some(path), None) => {
            let params = load_params_from_path(path)
                .map_err(|e| config_err(format!("checkpoint {}: {e}", path.display())))?;
            if params.dims.horizon != settings.sim.prediction_horizon {
                return Err(config_err(format!(
                    "checkpoint horizon {} does not match prediction horizon {}",
                    params.dims.horizon, settings.sim.prediction_horizon
                )));
            }
            ControllerChoice::Policy(Box::new(params))
        }
        (None, Some(baseline)) => ControllerChoice::Baseline(baseline),
        (None, None) => {
            return Err(config_err(
                "pass either --checkpoint or --baseline to pick a controller".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    let predictor: PredictorKind = args.predictor.into();
    let seed_base = args.seed.unwrap_or(settings.train.seed);
    let seeds: Vec<u64> = (0..args.episodes)
        .map(|i| seed_base.wrapping_add(i as u64))
        .collect();

    let episodes_dir = args.out.join("episodes");
    std::fs::create_dir_all(&episodes_dir).map_err(runtime)?;
    write_manifest(
        &args.out.join("manifest.txt"),
        "eval",
        &[
            ("controller", choice.describe()),
            ("predictor", args.predictor.to_string()),
            ("episodes", args.episodes.to_string()),
            ("seed_base", seed_base.to_string()),
        ],
        &settings,
    )
    .map_err(runtime)?;

    let records = run_batch(&settings.sim, predictor, || choice.build(), &seeds)?;
    for (i, record) in records.iter().enumerate() {
        let path = episodes_dir.join(format!("ep_{i:05}.jsonl"));
        write_episode_to_path(record, path).map_err(runtime)?;
    }

    let report = evaluate_records(&records);
    write_report(&args.out, &report).map_err(runtime)?;
    print!("{}", report.table());
    println!("episodes written to {}", episodes_dir.display());
    Ok(())
}

fn write_report(dir: &Path, report: &MetricsReport) -> std::io::Result<()> {
    std::fs::write(dir.join("report.txt"), report.table())?;
    let csv = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row());
    std::fs::write(dir.join("report.csv"), csv)
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory of episode JSONL files
    pub episodes: PathBuf,
    /// Optional directory for report.txt and report.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<(), CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.episodes)
        .map_err(|e| runtime(format!("{}: {e}", args.episodes.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(runtime(format!(
            "no .jsonl episode files in {}",
            args.episodes.display()
        )));
    }
    let mut records = Vec::with_capacity(paths.len());
    for path in &paths {
        let record = read_episode_from_path(path)
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        records.push(record);
    }
    let report = evaluate_records(&records);
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(runtime)?;
        write_report(out, &report).map_err(runtime)?;
    }
    print!("{}", report.table());
    Ok(())
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Episode JSONL file to draw
    pub episode: PathBuf,
    /// Output directory for the SVG frames
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_render(args: &RenderArgs) -> Result<(), CliError> {
    let record = read_episode_from_path(&args.episode)
        .map_err(|e| runtime(format!("{}: {e}", args.episode.display())))?;
    if record.steps.is_empty() {
        return Err(runtime(format!(
            "{}: episode has no steps to draw",
            args.episode.display()
        )));
    }
    let frames = render_episode(&record, &args.out).map_err(runtime)?;
    println!("wrote {frames} frames to {}", args.out.display());
    Ok(())
}
