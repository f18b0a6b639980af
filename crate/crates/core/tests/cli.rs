use std::path::Path;
use std::process::{Command, Output};

use svgrad::harness::{read_metrics, ExperimentConfig, OUTPUT_ROOT_ENV};

fn svg(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svg"))
        .args(args)
        .env(OUTPUT_ROOT_ENV, root)
        .output()
        .expect("run svg binary")
}

#[test]
fn preset_run_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("lqg.json");
    let out = svg(&["preset", "lqg-svg1er", "--out", cfg_path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    assert_eq!(cfg.algorithm, "svg1_er");

    let sets = [
        "episodes=4",
        "max_episode_steps=15",
        "policy.hidden=[4]",
        "value.hidden=[4]",
        "value.updates=3",
        "model.hidden=[4]",
        "model.batches=3",
        "replay.steps=2",
        "eval.period=2",
        "eval.episodes=2",
        "name=cli",
    ];
    let mut args = vec!["run", cfg_path.to_str().unwrap()];
    for s in &sets {
        args.extend(["--set", s]);
    }
    let out = svg(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("episode")).count(), 2);
    let run_dir = dir.path().join("cli");
    let rows = read_metrics(std::fs::File::open(run_dir.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.episode).collect::<Vec<_>>(), [2, 4]);

    let ckpt = run_dir.join("policy.ckpt");
    let out = svg(&["eval", ckpt.to_str().unwrap(), "lqg", "--episodes", "3", "--steps", "20"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stdout.is_empty());
}

#[test]
fn gradcheck_passes_and_bad_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("hand.json");
    let out = svg(&["preset", "hand-svginf", "--out", cfg_path.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let out = svg(&["gradcheck", cfg_path.to_str().unwrap(), "--seeds", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = svg(&["preset", "no-such-preset"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lqg-svg1er"));

    let out = svg(&["run", cfg_path.to_str().unwrap(), "--set", "episodes=oops"], dir.path());
    assert!(!out.status.success());
    assert!(!dir.path().join("hand-svginf").exists());
}
