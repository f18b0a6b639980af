use std::collections::BTreeMap;

use super::config::{ExperimentConfig, ModelConfig, OptimizerConfig, PolicyConfig, ReplayConfig, ValueConfig};
use crate::error::{Error, Result};

pub const PRESETS: [&str; 11] = [
    "hand-svginf",
    "hand-planner",
    "cartpole-svg1er",
    "cartpole-svg1",
    "cartpole-svginf",
    "cartpole-svg0",
    "cartpole-ac",
    "lqg-svg1er",
    "lqg-svg1",
    "lqg-svg0",
    "lqg-ac",
];

pub const SUITES: [&str; 2] = ["hand-svginf-vs-planner", "cartpole-comparison"];

fn overrides(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn hand(name: &str, algorithm: &str) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        env: "hand".into(),
        env_overrides: overrides(&[("dt", 0.01), ("alpha1", -0.01)]),
        algorithm: algorithm.into(),
        gamma: Some(1.0),
        horizon: Some(200),
        episodes: 300,
        policy: PolicyConfig {
            hidden: vec![100, 100],
            init_std: 0.3,
            last_layer_scale: 0.1,
            learn_std: false,
            optimizer: OptimizerConfig::rmsprop(3e-3),
        },
        model: ModelConfig {
            hidden: vec![20, 20],
            batches: 50,
            batch_size: 64,
            optimizer: OptimizerConfig::rmsprop(3e-3),
        },
        eval: super::config::EvalConfig {
            period: 10,
            episodes: 10,
            stochastic: false,
        },
        ..ExperimentConfig::default()
    }
}

fn cartpole(name: &str, algorithm: &str) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        env: "cartpole".into(),
        algorithm: algorithm.into(),
        horizon: Some(199),
        episodes: 200,
        policy: PolicyConfig {
            hidden: vec![100, 100],
            init_std: 0.3,
            last_layer_scale: 0.1,
            learn_std: false,
            optimizer: OptimizerConfig::rmsprop(1e-3),
        },
        value: ValueConfig {
            hidden: vec![200, 100],
            value_scale: 10.0,
            time_input: true,
            updates: 100,
            batch_size: 32,
            sync_period: crate::valuefn::DEFAULT_SYNC_PERIOD,
            optimizer: OptimizerConfig::rmsprop(3e-4),
        },
        model: ModelConfig {
            hidden: vec![20, 20],
            batches: 200,
            batch_size: 64,
            optimizer: OptimizerConfig::rmsprop(3e-3),
        },
        replay: ReplayConfig {
            steps: 20,
            ..ReplayConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn lqg(name: &str, algorithm: &str) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        env: "lqg".into(),
        algorithm: algorithm.into(),
        max_episode_steps: Some(100),
        episodes: 300,
        policy: PolicyConfig {
            hidden: vec![20],
            init_std: 0.5,
            last_layer_scale: 0.1,
            learn_std: false,
            optimizer: OptimizerConfig::rmsprop(3e-4),
        },
        value: ValueConfig {
            hidden: vec![64, 64],
            value_scale: 30.0,
            time_input: false,
            updates: 100,
            batch_size: 32,
            sync_period: crate::valuefn::DEFAULT_SYNC_PERIOD,
            optimizer: OptimizerConfig::rmsprop(1e-3),
        },
        model: ModelConfig {
            hidden: vec![20, 20],
            batches: 100,
            batch_size: 64,
            optimizer: OptimizerConfig::rmsprop(3e-3),
        },
        eval: super::config::EvalConfig {
            period: 10,
            episodes: 20,
            stochastic: false,
        },
        ..ExperimentConfig::default()
    }
}

/// A named configuration.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "hand-svginf" => hand(name, "svg_inf"),
        "hand-planner" => hand(name, "planner"),
        "cartpole-svg1er" => cartpole(name, "svg1_er"),
        "cartpole-svg1" => cartpole(name, "svg1"),
        "cartpole-svginf" => cartpole(name, "svg_inf"),
        "cartpole-svg0" => cartpole(name, "svg0"),
        "cartpole-ac" => cartpole(name, "ac"),
        "lqg-svg1er" => lqg(name, "svg1_er"),
        "lqg-svg1" => lqg(name, "svg1"),
        "lqg-svg0" => lqg(name, "svg0"),
        "lqg-ac" => lqg(name, "ac"),
        _ => {
            return Err(Error::UnknownPreset {
                name: name.into(),
                available: PRESETS.iter().chain(SUITES.iter()).copied().collect::<Vec<_>>().join(", "),
            })
        }
    };
    Ok(cfg)
}

/// A named group of presets run side by side; single preset names give a
/// one-element suite.
pub fn suite(name: &str) -> Result<Vec<ExperimentConfig>> {
    match name {
        "hand-svginf-vs-planner" => Ok(vec![preset("hand-svginf")?, preset("hand-planner")?]),
        "cartpole-comparison" => Ok(vec![
            preset("cartpole-svg1er")?,
            preset("cartpole-svg1")?,
            preset("cartpole-ac")?,
        ]),
        other => Ok(vec![preset(other)?]),
    }
}
