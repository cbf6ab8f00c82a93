//! End-to-end checks of the `crowdnav` binary: exit codes, files written by
//! each subcommand, and replay agreement, all through the real executable.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn crowdnav() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crowdnav"));
    cmd.env_remove("CROWDSIM_THREADS");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("the binary should launch")
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Small scenario so evaluation runs finish in well under a second.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "max_humans = 3\nmax_steps = 40\nsensor_range = 4\n",
    )
    .unwrap();
    path
}

#[test]
fn unknown_config_key_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "warp_drive = 9\n").unwrap();
    let out = run(crowdnav()
        .args(["eval", "--baseline", "orca", "--episodes", "1"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(out.status.code(), Some(2), "{}", stderr_text(&out));
    assert!(stderr_text(&out).contains("warp_drive"));
}

#[test]
fn missing_config_file_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let out = run(crowdnav()
        .args(["eval", "--baseline", "orca", "--episodes", "1"])
        .arg("--config")
        .arg(dir.path().join("nowhere.cfg"))
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(out.status.code(), Some(2), "{}", stderr_text(&out));
    assert!(stderr_text(&out).contains("configuration error"));
}

#[test]
fn eval_without_a_controller_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let out = run(crowdnav()
        .args(["eval", "--episodes", "1"])
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(out.status.code(), Some(2), "{}", stderr_text(&out));
    assert!(stderr_text(&out).contains("--checkpoint or --baseline"));
}

#[test]
fn eval_with_both_controllers_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out = run(crowdnav()
        .args(["eval", "--baseline", "orca", "--checkpoint", "x.txt"])
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(out.status.code(), Some(2), "{}", stderr_text(&out));
}

#[test]
fn eval_with_a_bad_checkpoint_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let out = run(crowdnav()
        .args(["eval", "--episodes", "1"])
        .arg("--checkpoint")
        .arg(dir.path().join("nowhere.txt"))
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(out.status.code(), Some(2), "{}", stderr_text(&out));
    assert!(stderr_text(&out).contains("checkpoint"));
}

#[test]
fn eval_writes_manifest_reports_and_episode_logs() {
    let dir = TempDir::new().unwrap();
    let config = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(crowdnav()
        .args(["eval", "--baseline", "orca", "--episodes", "4", "--seed", "7"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));
    assert!(stdout_text(&out).contains("success_rate"));
    assert!(out_dir.join("manifest.txt").exists());
    assert!(out_dir.join("report.txt").exists());
    assert!(out_dir.join("report.csv").exists());
    for i in 0..4 {
        assert!(out_dir.join(format!("episodes/ep_{i:05}.jsonl")).exists());
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# command: eval"));
    assert!(manifest.contains("seed_base: 7"));
    assert!(manifest.contains("max_humans = 3"));
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("episodes,success_rate"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn replay_reproduces_the_live_eval_report() {
    let dir = TempDir::new().unwrap();
    let config = small_config(dir.path());
    let eval_dir = dir.path().join("eval");
    let out = run(crowdnav()
        .args(["eval", "--baseline", "sf", "--episodes", "3", "--seed", "11"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&eval_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));

    let replay_dir = dir.path().join("replay");
    let out = run(crowdnav()
        .arg("replay")
        .arg(eval_dir.join("episodes"))
        .arg("--out")
        .arg(&replay_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));
    let live = fs::read(eval_dir.join("report.txt")).unwrap();
    let replayed = fs::read(replay_dir.join("report.txt")).unwrap();
    assert_eq!(live, replayed);
    let live_csv = fs::read(eval_dir.join("report.csv")).unwrap();
    let replayed_csv = fs::read(replay_dir.join("report.csv")).unwrap();
    assert_eq!(live_csv, replayed_csv);
}

#[test]
fn replay_of_a_directory_without_episodes_exits_with_code_1() {
    let dir = TempDir::new().unwrap();
    let out = run(crowdnav().arg("replay").arg(dir.path()));
    assert_eq!(out.status.code(), Some(1), "{}", stderr_text(&out));
    assert!(stderr_text(&out).contains("no .jsonl episode files"));
}

#[test]
fn render_writes_one_frame_per_step() {
    let dir = TempDir::new().unwrap();
    let config = small_config(dir.path());
    let eval_dir = dir.path().join("eval");
    let out = run(crowdnav()
        .args(["eval", "--baseline", "random", "--episodes", "1", "--seed", "3"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&eval_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));

    let episode = eval_dir.join("episodes/ep_00000.jsonl");
    let steps = fs::read_to_string(&episode).unwrap().lines().count() - 1;
    let frames_dir = dir.path().join("frames");
    let out = run(crowdnav()
        .arg("render")
        .arg(&episode)
        .arg("--out")
        .arg(&frames_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));
    let frames = fs::read_dir(&frames_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|ext| ext == "svg")
        })
        .count();
    assert_eq!(frames, steps);
    assert!(frames_dir.join("frame_0001.svg").exists());
}

#[test]
fn render_of_an_empty_episode_file_exits_with_code_1() {
    let dir = TempDir::new().unwrap();
    let episode = dir.path().join("empty.jsonl");
    fs::write(&episode, "").unwrap();
    let out = run(crowdnav()
        .arg("render")
        .arg(&episode)
        .arg("--out")
        .arg(dir.path().join("frames")));
    assert_eq!(out.status.code(), Some(1), "{}", stderr_text(&out));
}

#[test]
fn train_with_zero_steps_writes_checkpoint_log_and_manifest() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("train.cfg");
    fs::write(
        &config,
        "max_humans = 2\nmax_steps = 20\ntotal_steps = 0\nnum_envs = 2\n\
         steps_per_update = 5\nd_hh = 8\nheads = 2\nd_rh = 8\nd_r = 4\nd_h = 8\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = run(crowdnav()
        .args(["train", "--seed", "5"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));
    assert!(stdout_text(&out).contains("finished 0 updates"));
    assert!(out_dir.join("checkpoint_final.txt").exists());
    assert!(out_dir.join("manifest.txt").exists());
    let log = fs::read_to_string(out_dir.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1, "header only: {log}");
    assert!(log.starts_with("update,steps"));
}

#[test]
fn trained_checkpoint_loads_back_into_eval() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("shared.cfg");
    fs::write(
        &config,
        "max_humans = 2\nmax_steps = 20\ntotal_steps = 0\nnum_envs = 2\n\
         steps_per_update = 5\nd_hh = 8\nheads = 2\nd_rh = 8\nd_r = 4\nd_h = 8\n",
    )
    .unwrap();
    let train_dir = dir.path().join("run");
    let out = run(crowdnav()
        .arg("train")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&train_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));

    let eval_dir = dir.path().join("eval");
    let out = run(crowdnav()
        .args(["eval", "--episodes", "2", "--seed", "1"])
        .arg("--config")
        .arg(&config)
        .arg("--checkpoint")
        .arg(train_dir.join("checkpoint_final.txt"))
        .arg("--out")
        .arg(&eval_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));
    assert!(eval_dir.join("report.csv").exists());
}

#[test]
fn invalid_thread_cap_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    for value in ["abc", "0"] {
        let out = run(crowdnav()
            .env("CROWDSIM_THREADS", value)
            .arg("replay")
            .arg(dir.path()));
        assert_eq!(out.status.code(), Some(2), "value {value}");
        assert!(stderr_text(&out).contains("CROWDSIM_THREADS"));
    }
}

#[test]
fn thread_cap_of_one_still_evaluates() {
    let dir = TempDir::new().unwrap();
    let config = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(crowdnav()
        .env("CROWDSIM_THREADS", "1")
        .args(["eval", "--baseline", "orca", "--episodes", "2", "--seed", "9"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr_text(&out));
    assert!(out_dir.join("report.txt").exists());
}
