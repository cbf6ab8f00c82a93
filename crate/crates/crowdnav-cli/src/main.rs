//! Command line front end for the crowd navigation stack.

mod commands;
mod render;
mod settings;

use clap::{Parser, Subcommand};

use commands::{cmd_eval, cmd_render, cmd_replay, cmd_train, CliError};

#[derive(Parser)]
#[command(
    name = "crowdnav",
    version,
    about = "Train, evaluate, replay, and render crowd navigation policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO and write logs and checkpoints
    Train(commands::TrainArgs),
    /// Run a policy or baseline over a batch of episodes and report metrics
    Eval(commands::EvalArgs),
    /// Recompute metrics from logged episode files
    Replay(commands::ReplayArgs),
    /// Draw a logged episode as one SVG per step
    Render(commands::RenderArgs),
}

/// `CROWDSIM_THREADS` caps the worker pool; unset means all cores.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CROWDSIM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().map_err(|_| {
        CliError::Config(format!("CROWDSIM_THREADS: '{value}' is not a thread count"))
    })?;
    if threads == 0 {
        return Err(CliError::Config(
            "CROWDSIM_THREADS must be at least 1".into(),
        ));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Render(args) => cmd_render(args),
    });
    if let Err(err) = result {
        eprintln!("{err}");
        let code = match err {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        };
        std::process::exit(code);
    }
}
