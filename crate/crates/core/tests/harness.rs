use std::fs;

use svgrad::harness::{
    read_metrics, run_experiment, run_experiment_with, ExperimentConfig, MetricsRow, OptimizerConfig, Phase,
    RunStatus, TrainingObserver, METRICS_COLUMNS,
};

fn small(algorithm: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: format!("small-{algorithm}"),
        env: "lqg".into(),
        algorithm: algorithm.into(),
        max_episode_steps: Some(15),
        episodes: 4,
        ..ExperimentConfig::default()
    };
    if matches!(algorithm, "svg_inf" | "planner") {
        cfg.env = "hand".into();
        cfg.max_episode_steps = None;
        cfg.horizon = Some(14);
    }
    cfg.policy.hidden = vec![4];
    cfg.value.hidden = vec![6];
    cfg.value.updates = 5;
    cfg.model.hidden = vec![4];
    cfg.model.batches = 5;
    cfg.replay.steps = 3;
    cfg.eval.period = 2;
    cfg.eval.episodes = 2;
    cfg
}

fn header(path: &std::path::Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn every_algorithm_runs_and_writes_artifacts() {
    let root = tempfile::tempdir().unwrap();
    for algorithm in svgrad::svg::ALGORITHMS {
        let cfg = small(algorithm);
        let out = run_experiment(&cfg, root.path()).unwrap();
        assert_eq!(out.status, RunStatus::Completed, "{algorithm}");
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.rows[1].episode, 4);
        assert_eq!(out.env_steps, 60, "{algorithm}");
        assert!(out.dir.join("policy.ckpt").exists());
        assert_eq!(out.dir.join("model.ckpt").exists(), cfg.uses_model(), "{algorithm}");
        assert!(!out.dir.join("DIVERGED").exists());
        let saved = ExperimentConfig::from_json(&fs::read_to_string(out.dir.join("config.json")).unwrap()).unwrap();
        assert_eq!(saved, cfg);
        let csv = out.dir.join("metrics.csv");
        assert_eq!(header(&csv), METRICS_COLUMNS.join(","));
        let rows = read_metrics(fs::File::open(&csv).unwrap()).unwrap();
        assert_eq!(rows, out.rows);
        assert!(rows.iter().all(|r| r.grad_norm_pre.is_some()), "{algorithm}");
        assert_eq!(rows[0].model_nll.is_some(), cfg.uses_model());
    }
}

#[test]
fn zero_episodes_gives_header_only() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small("svg1");
    cfg.episodes = 0;
    let out = run_experiment(&cfg, root.path()).unwrap();
    assert!(out.rows.is_empty());
    let text = fs::read_to_string(out.dir.join("metrics.csv")).unwrap();
    assert_eq!(text.trim_end(), METRICS_COLUMNS.join(","));
}

#[test]
fn same_seed_same_metrics() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small("svg1_er");
    cfg.seed = 5;
    let x = run_experiment(&cfg, a.path()).unwrap();
    let y = run_experiment(&cfg, b.path()).unwrap();
    assert_eq!(
        fs::read(x.dir.join("metrics.csv")).unwrap(),
        fs::read(y.dir.join("metrics.csv")).unwrap()
    );
    assert_eq!(fs::read(x.dir.join("policy.ckpt")).unwrap(), fs::read(y.dir.join("policy.ckpt")).unwrap());
    cfg.seed = 6;
    let z = run_experiment(&cfg, a.path()).unwrap();
    assert_ne!(x.rows, z.rows);
}

#[derive(Default)]
struct Recorder {
    phases: Vec<(u64, Phase)>,
    rows: Vec<MetricsRow>,
}

impl TrainingObserver for Recorder {
    fn phase(&mut self, episode: u64, phase: Phase) {
        self.phases.push((episode, phase));
    }

    fn row(&mut self, row: &MetricsRow) {
        self.rows.push(row.clone());
    }
}

#[test]
fn outer_step_order_is_model_value_policy() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small("svg1_er");
    let mut rec = Recorder::default();
    let out = run_experiment_with(&cfg, root.path(), &mut rec).unwrap();
    let expected: Vec<_> = (0..4)
        .flat_map(|e| [(e, Phase::Model), (e, Phase::Value), (e, Phase::Policy)])
        .collect();
    assert_eq!(rec.phases, expected);
    assert_eq!(rec.rows, out.rows);

    let mut rec = Recorder::default();
    run_experiment_with(&small("svg_inf"), root.path(), &mut rec).unwrap();
    assert!(rec.phases.iter().all(|(_, p)| *p != Phase::Value));
}

#[test]
fn invalid_config_writes_nothing() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small("svg1");
    cfg.algorithm = "reinforce".into();
    assert!(run_experiment(&cfg, root.path()).is_err());
    let mut cfg = small("svg1");
    cfg.v_max = -1.0;
    assert!(run_experiment(&cfg, root.path()).is_err());
    let mut cfg = small("svg_inf");
    cfg.schedule = svgrad::harness::UpdateSchedule::Step;
    assert!(run_experiment(&cfg, root.path()).is_err());
    assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn divergence_stops_gracefully() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small("svg1");
    cfg.episodes = 40;
    cfg.v_max = f64::INFINITY;
    cfg.policy.optimizer = OptimizerConfig::sgd(1e150);
    let out = run_experiment(&cfg, root.path()).unwrap();
    assert!(matches!(out.status, RunStatus::Diverged(_)), "{:?}", out.status);
    assert!(out.dir.join("DIVERGED").exists());
    assert!(out.dir.join("policy.ckpt").exists());
    let rows = read_metrics(fs::File::open(out.dir.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows, out.rows);
    assert!(rows.len() < 20);
}

#[test]
fn step_schedule_updates_every_transition() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small("svg1");
    cfg.schedule = svgrad::harness::UpdateSchedule::Step;
    cfg.episodes = 1;
    cfg.eval.period = 1;
    let mut rec = Recorder::default();
    run_experiment_with(&cfg, root.path(), &mut rec).unwrap();
    assert_eq!(rec.phases.iter().filter(|(_, p)| *p == Phase::Policy).count(), 15);
}

#[test]
fn output_dir_overrides_root() {
    let root = tempfile::tempdir().unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let mut cfg = small("ac");
    cfg.output_dir = Some(elsewhere.path().join("x").to_string_lossy().into_owned());
    let out = run_experiment(&cfg, root.path()).unwrap();
    assert_eq!(out.dir, elsewhere.path().join("x"));
    assert!(out.dir.join("metrics.csv").exists());
}
