use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffcore::{Optimizer, OptimizerRule};
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::svg::ALGORITHMS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub step_size: f64,
    #[serde(flatten)]
    pub rule: OptimizerRule,
}

impl OptimizerConfig {
    pub fn rmsprop(step_size: f64) -> Self {
        OptimizerConfig {
            step_size,
            rule: OptimizerRule::Rmsprop {
                decay: 0.9,
                epsilon: 1e-8,
            },
        }
    }

    pub fn sgd(step_size: f64) -> Self {
        OptimizerConfig {
            step_size,
            rule: OptimizerRule::Sgd,
        }
    }

    pub fn build(&self) -> Result<Optimizer> {
        Optimizer::new(self.step_size, self.rule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    /// Initial standard deviation as a fraction of the action scale.
    pub init_std: f64,
    /// Multiplier on the randomly initialized output layer.
    pub last_layer_scale: f64,
    pub learn_std: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: vec![100, 100],
            init_std: 0.1,
            last_layer_scale: 0.1,
            learn_std: true,
            optimizer: OptimizerConfig::rmsprop(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueConfig {
    pub hidden: Vec<usize>,
    /// Output scale of the critic network.
    pub value_scale: f64,
    /// Feed `t / T` to the critic for finite-horizon environments.
    pub time_input: bool,
    /// Fitted-evaluation updates `M` per outer step.
    pub updates: usize,
    pub batch_size: usize,
    /// Target-network sync period `C`.
    pub sync_period: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for ValueConfig {
    fn default() -> Self {
        ValueConfig {
            hidden: vec![200, 100],
            value_scale: 10.0,
            time_input: false,
            updates: 100,
            batch_size: 32,
            sync_period: crate::valuefn::DEFAULT_SYNC_PERIOD,
            optimizer: OptimizerConfig::rmsprop(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden sizes of each per-dimension subnetwork.
    pub hidden: Vec<usize>,
    /// Minibatches per outer step.
    pub batches: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![20, 20],
            batches: 100,
            batch_size: 32,
            optimizer: OptimizerConfig::rmsprop(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    /// Policy replay steps `K` per episode (SVG(1)-ER).
    pub steps: usize,
    pub batch_size: usize,
    /// KL penalty weight.
    pub beta: f64,
    /// Importance-weight truncation.
    pub w_max: f64,
    pub capacity: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            steps: 20,
            batch_size: 32,
            beta: 0.0,
            w_max: crate::replay::DEFAULT_MAX_WEIGHT,
            capacity: crate::replay::DEFAULT_CAPACITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluate after every `period` episodes; 0 disables evaluation rows.
    pub period: usize,
    pub episodes: usize,
    /// Sample actions instead of using the policy mean.
    pub stochastic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            period: 10,
            episodes: 10,
            stochastic: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateSchedule {
    /// Model, critic and policy updates once after each episode.
    Episode,
    /// Model, critic and policy updates after every environment step.
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run name; also the output subdirectory.
    pub name: String,
    pub env: String,
    pub env_overrides: BTreeMap<String, f64>,
    /// One of `svg_inf`, `svg1`, `svg1_er`, `svg0`, `planner`, `ac`.
    pub algorithm: String,
    /// Overrides the environment's discount.
    pub gamma: Option<f64>,
    /// Overrides the last step index `T` of finite-horizon environments.
    pub horizon: Option<usize>,
    /// Episode length cap; required for infinite-horizon environments.
    pub max_episode_steps: Option<usize>,
    pub episodes: usize,
    pub schedule: UpdateSchedule,
    pub policy: PolicyConfig,
    pub value: ValueConfig,
    pub model: ModelConfig,
    pub replay: ReplayConfig,
    /// Policy gradient norm bound.
    pub v_max: f64,
    pub eval: EvalConfig,
    pub seed: u64,
    /// Output directory; defaults to `<output root>/<name>`.
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            env: "lqg".into(),
            env_overrides: BTreeMap::new(),
            algorithm: "svg1_er".into(),
            gamma: None,
            horizon: None,
            max_episode_steps: None,
            episodes: 100,
            schedule: UpdateSchedule::Episode,
            policy: PolicyConfig::default(),
            value: ValueConfig::default(),
            model: ModelConfig::default(),
            replay: ReplayConfig::default(),
            v_max: 1.0,
            eval: EvalConfig::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads one config or a JSON array of configs.
    pub fn load_all(path: &Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)?;
        let items = match value {
            Value::Array(items) => items,
            other => vec![other],
        };
        items.into_iter().map(|v| Ok(serde_json::from_value(v)?)).collect()
    }

    /// Applies `key=value` overrides with dotted keys, e.g.
    /// `policy.optimizer.step_size=1e-4` or `env_overrides.horizon=200`.
    /// Values are parsed as JSON and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        for set in sets {
            let set = set.as_ref();
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{set}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut root;
            for part in key.split('.') {
                let obj = slot
                    .as_object_mut()
                    .ok_or_else(|| Error::InvalidConfig(format!("override `{key}`: `{part}` is not inside an object")))?;
                slot = obj.entry(part.to_string()).or_insert(Value::Null);
            }
            *slot = value;
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(root).map_err(|e| Error::InvalidConfig(format!("after overrides: {e}")))?;
        Ok(cfg)
    }

    /// Environment overrides including the top-level `gamma` and `horizon`.
    pub fn effective_env_overrides(&self) -> BTreeMap<String, f64> {
        let mut o = self.env_overrides.clone();
        if let Some(g) = self.gamma {
            o.insert("gamma".into(), g);
        }
        if let Some(h) = self.horizon {
            o.insert("horizon".into(), h as f64);
        }
        o
    }

    pub fn make_env(&self) -> Result<Box<dyn Environment>> {
        make_env(&self.env, &self.effective_env_overrides())
    }

    /// Steps per episode: `T + 1` capped by `max_episode_steps`.
    pub fn episode_steps(&self, env: &dyn Environment) -> Result<usize> {
        match (env.spec().horizon, self.max_episode_steps) {
            (Some(h), Some(m)) => Ok((h + 1).min(m)),
            (Some(h), None) => Ok(h + 1),
            (None, Some(m)) => Ok(m),
            (None, None) => Err(Error::InvalidConfig(format!(
                "environment `{}` has no horizon; set max_episode_steps",
                self.env
            ))),
        }
    }

    pub fn uses_model(&self) -> bool {
        matches!(self.algorithm.as_str(), "svg_inf" | "svg1" | "svg1_er" | "planner")
    }

    pub fn uses_value_critic(&self) -> bool {
        matches!(self.algorithm.as_str(), "svg1" | "svg1_er" | "ac")
    }

    pub fn uses_q_critic(&self) -> bool {
        self.algorithm == "svg0"
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !ALGORITHMS.contains(&self.algorithm.as_str()) {
            return bad(format!("unknown algorithm `{}`; expected one of {ALGORITHMS:?}", self.algorithm));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("run name `{}` must be a plain file name", self.name));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return bad(format!("gamma {g} outside [0, 1]"));
            }
        }
        let env = self.make_env()?;
        self.episode_steps(env.as_ref())?;
        if matches!(self.algorithm.as_str(), "svg_inf" | "planner") && env.spec().horizon.is_none() {
            return bad(format!("{} needs a finite-horizon environment", self.algorithm));
        }
        if !(self.v_max > 0.0) {
            return bad(format!("v_max must be > 0, got {}", self.v_max));
        }
        if !(self.replay.w_max > 0.0) || !(self.replay.beta >= 0.0) {
            return bad("replay.w_max must be > 0 and replay.beta >= 0".into());
        }
        if self.replay.capacity == 0 {
            return bad("replay.capacity must be positive".into());
        }
        if self.value.sync_period == 0 {
            return bad("value.sync_period must be positive".into());
        }
        if !(self.policy.init_std > 0.0) {
            return bad("policy.init_std must be > 0".into());
        }
        if self.eval.period > 0 && self.eval.episodes == 0 {
            return bad("eval.episodes must be positive when evaluation is enabled".into());
        }
        for (what, o) in [
            ("policy", &self.policy.optimizer),
            ("value", &self.value.optimizer),
            ("model", &self.model.optimizer),
        ] {
            o.build().map_err(|e| Error::InvalidConfig(format!("{what} optimizer: {e}")))?;
        }
        Ok(())
    }
}
