use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::diffcore::Optimizer;
use crate::dynmodel::DynamicsModel;
use crate::envs::{EnvState, Environment};
use crate::error::{Error, Result};
use crate::policy::ReparamGaussianPolicy;
use crate::replay::{ExperienceDatabase, Transition};
use crate::rng::{stream, Stream, StreamRng};
use crate::svg::{
    actor_critic_gradient, apply_policy_gradient, kl_regularized_replay_update, mean_gradient, planner_gradient,
    svg0_gradient, svg1_gradient, svg_inf_gradient, ReplaySettings, RolloutTrace,
};
use crate::valuefn::{EvaluationSettings, QCritic, ValueCritic};

use super::config::{ExperimentConfig, UpdateSchedule};
use super::eval::evaluate_policy;
use super::metrics::{MetricsRow, MetricsWriter};

/// Environment variable naming the directory under which runs are written.
pub const OUTPUT_ROOT_ENV: &str = "SVG_OUTPUT_ROOT";

/// `$SVG_OUTPUT_ROOT`, or `runs` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Model,
    Value,
    Policy,
}

/// Hooks into the training loop.
pub trait TrainingObserver {
    fn phase(&mut self, episode: u64, phase: Phase) {
        let _ = (episode, phase);
    }

    fn row(&mut self, row: &MetricsRow) {
        let _ = row;
    }
}

pub struct NoObserver;

impl TrainingObserver for NoObserver {}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Training hit a non-finite quantity and stopped early.
    Diverged(String),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub status: RunStatus,
    pub policy: ReparamGaussianPolicy,
    pub model: Option<DynamicsModel>,
    pub env_steps: u64,
}

/// Runs `cfg` and writes `config.json`, `metrics.csv` and checkpoints to its
/// output directory (`cfg.output_dir`, else `<root>/<cfg.name>`).
///
/// An invalid config is rejected before anything is written. A run that
/// diverges keeps the rows written so far and reports [`RunStatus::Diverged`].
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<RunOutcome> {
    run_experiment_with(cfg, root, &mut NoObserver)
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    root: &Path,
    observer: &mut dyn TrainingObserver,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.schedule == UpdateSchedule::Step && matches!(cfg.algorithm.as_str(), "svg_inf" | "planner") {
        return Err(Error::InvalidConfig(format!("{} only supports per-episode updates", cfg.algorithm)));
    }
    let dir = cfg.output_dir.as_ref().map(PathBuf::from).unwrap_or_else(|| root.join(&cfg.name));
    let mut trainer = Trainer::new(cfg)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
    let mut writer = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut rows = Vec::new();
    let mut status = RunStatus::Completed;
    for episode in 0..cfg.episodes as u64 {
        match trainer.episode(episode, observer) {
            Ok(()) => {}
            Err(e) if is_divergence(&e) => {
                status = RunStatus::Diverged(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
        let done = episode + 1;
        if cfg.eval.period > 0 && done % cfg.eval.period as u64 == 0 {
            let row = match trainer.row(done) {
                Ok(row) => row,
                Err(e) if is_divergence(&e) => {
                    status = RunStatus::Diverged(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            writer.write(&row)?;
            observer.row(&row);
            rows.push(row);
            trainer.write_checkpoints(&dir)?;
        }
    }
    trainer.write_checkpoints(&dir)?;
    if let RunStatus::Diverged(msg) = &status {
        fs::write(dir.join("DIVERGED"), format!("{msg}\n"))?;
    }
    Ok(RunOutcome {
        dir,
        rows,
        status,
        policy: trainer.policy,
        model: trainer.model,
        env_steps: trainer.env_steps,
    })
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::NonFiniteAccumulator { .. } | Error::Diverged(_))
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn take(&mut self) -> Option<f64> {
        let out = (self.n > 0).then(|| self.sum / self.n as f64);
        *self = Mean::default();
        out
    }
}

#[derive(Default)]
struct Accumulators {
    model_nll: Mean,
    value_loss: Mean,
    grad_pre: Mean,
    grad_post: Mean,
    weight: Mean,
}

struct Trainer<'a> {
    cfg: &'a ExperimentConfig,
    env: Box<dyn Environment>,
    episode_steps: usize,
    policy: ReparamGaussianPolicy,
    policy_opt: Optimizer,
    model: Option<DynamicsModel>,
    model_opt: Optimizer,
    v_critic: Option<ValueCritic>,
    q_critic: Option<QCritic>,
    critic_opt: Optimizer,
    db: ExperienceDatabase,
    env_rng: StreamRng,
    noise_rng: StreamRng,
    replay_rng: StreamRng,
    model_rng: StreamRng,
    planner_rng: StreamRng,
    acc: Accumulators,
    env_steps: u64,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let env = cfg.make_env()?;
        let spec = env.spec().clone();
        let episode_steps = cfg.episode_steps(env.as_ref())?;
        let mut init = stream(cfg.seed, Stream::Init);
        let p = &cfg.policy;
        let policy = ReparamGaussianPolicy::for_env(&spec, &p.hidden, p.init_std, p.last_layer_scale, &mut init)?;
        let model = if cfg.uses_model() {
            Some(DynamicsModel::random(spec.state_dim, spec.action_dim, &cfg.model.hidden, &mut init)?)
        } else {
            None
        };
        let v = &cfg.value;
        let time = if v.time_input { spec.horizon } else { None };
        let v_critic = if cfg.uses_value_critic() {
            Some(
                ValueCritic::random(spec.state_dim, &v.hidden, v.value_scale, spec.gamma, time, &mut init)?
                    .with_sync_period(v.sync_period),
            )
        } else {
            None
        };
        let q_critic = if cfg.uses_q_critic() {
            Some(
                QCritic::random(spec.state_dim, spec.action_dim, &v.hidden, v.value_scale, spec.gamma, time, &mut init)?
                    .with_sync_period(v.sync_period),
            )
        } else {
            None
        };
        Ok(Trainer {
            cfg,
            env,
            episode_steps,
            policy,
            policy_opt: p.optimizer.build()?,
            model,
            model_opt: cfg.model.optimizer.build()?,
            v_critic,
            q_critic,
            critic_opt: v.optimizer.build()?,
            db: ExperienceDatabase::new(cfg.replay.capacity),
            env_rng: stream(cfg.seed, Stream::Env),
            noise_rng: stream(cfg.seed, Stream::PolicyNoise),
            replay_rng: stream(cfg.seed, Stream::Replay),
            model_rng: stream(cfg.seed, Stream::Model),
            planner_rng: stream(cfg.seed, Stream::Planner),
            acc: Accumulators::default(),
            env_steps: 0,
        })
    }

    fn episode(&mut self, episode: u64, observer: &mut dyn TrainingObserver) -> Result<()> {
        let mut st = self.env.reset(&mut self.env_rng);
        let start = st.clone();
        let mut transitions: Vec<Transition> = Vec::with_capacity(self.episode_steps);
        for _ in 0..self.episode_steps {
            let (a, _) = self.policy.sample(&st.s, &mut self.noise_rng)?;
            let res = self.env.step(&st, &a, &mut self.env_rng)?;
            if res.next_state.iter().any(|v| !v.is_finite()) || !res.reward.is_finite() {
                return Err(Error::NonFinite(format!("environment state at episode {episode}")));
            }
            let tr = Transition {
                behavior: self.policy.snapshot(&st.s)?,
                s: st.s.clone(),
                a,
                r: res.reward,
                s_next: res.next_state.clone(),
                terminal: res.terminal,
                t: st.t,
                episode_id: episode,
            };
            self.db.insert(tr.clone())?;
            transitions.push(tr);
            self.env_steps += 1;
            if self.cfg.schedule == UpdateSchedule::Step {
                let last = transitions.len() - 1;
                self.update(episode, &transitions[last..], &start, observer)?;
            }
            st = EnvState::new(res.next_state, st.t + 1);
            if res.terminal {
                break;
            }
        }
        if self.cfg.schedule == UpdateSchedule::Episode {
            self.update(episode, &transitions, &start, observer)?;
        }
        Ok(())
    }

    /// One outer step: model, then critic, then policy.
    fn update(
        &mut self,
        episode: u64,
        batch: &[Transition],
        start: &EnvState,
        observer: &mut dyn TrainingObserver,
    ) -> Result<()> {
        let cfg = self.cfg;
        if let Some(model) = &mut self.model {
            observer.phase(episode, Phase::Model);
            let rep = model.train(
                &self.db,
                cfg.model.batches,
                cfg.model.batch_size,
                &mut self.model_opt,
                &mut self.model_rng,
            )?;
            if let Some(reason) = rep.aborted {
                return Err(Error::Diverged(format!("model training: {reason}")));
            }
            self.acc.model_nll.push(rep.nll_after);
        }
        let settings = EvaluationSettings {
            updates: cfg.value.updates,
            batch_size: cfg.value.batch_size,
            w_max: cfg.replay.w_max,
        };
        if let Some(critic) = &mut self.v_critic {
            observer.phase(episode, Phase::Value);
            let rep = critic.fit(&self.db, &self.policy, &settings, &mut self.critic_opt, &mut self.replay_rng)?;
            if rep.updates > 0 {
                self.acc.value_loss.push(rep.mean_loss);
            }
        }
        if let Some(critic) = &mut self.q_critic {
            observer.phase(episode, Phase::Value);
            let rep = critic.fit(&self.db, &self.policy, &settings, &mut self.critic_opt, &mut self.replay_rng)?;
            if rep.updates > 0 {
                self.acc.value_loss.push(rep.mean_loss);
            }
        }
        observer.phase(episode, Phase::Policy);
        self.policy_update(batch, start)
    }

    fn policy_update(&mut self, batch: &[Transition], start: &EnvState) -> Result<()> {
        let cfg = self.cfg;
        let env = self.env.as_ref();
        let policy = &self.policy;
        let gamma = env.spec().gamma;
        let grad = match cfg.algorithm.as_str() {
            "svg_inf" => {
                let model = self.model.as_ref().expect("svg_inf has a model");
                let mut trace = RolloutTrace::from_transitions(batch);
                trace.infer_noises(policy, model)?;
                Some(svg_inf_gradient(&trace, model, policy, env, gamma)?)
            }
            "planner" => {
                let model = self.model.as_ref().expect("planner has a model");
                let (g, _) = planner_gradient(model, policy, env, start, batch.len(), &mut self.planner_rng)?;
                Some(g)
            }
            "svg1" => {
                let model = self.model.as_ref().expect("svg1 has a model");
                let critic = self.v_critic.as_ref().expect("svg1 has a critic");
                let mut grads = Vec::with_capacity(batch.len());
                for tr in batch {
                    let s = svg1_gradient(tr, model, policy, critic, env, cfg.replay.w_max)?;
                    self.acc.weight.push(s.weight);
                    grads.push(s.gradient);
                }
                mean_gradient(grads)
            }
            "svg0" => {
                let critic = self.q_critic.as_ref().expect("svg0 has a critic");
                let grads = batch.iter().map(|tr| svg0_gradient(tr, critic, policy)).collect::<Result<Vec<_>>>()?;
                mean_gradient(grads)
            }
            "ac" => {
                let critic = self.v_critic.as_ref().expect("ac has a critic");
                let grads = batch
                    .iter()
                    .map(|tr| actor_critic_gradient(tr, critic, policy))
                    .collect::<Result<Vec<_>>>()?;
                mean_gradient(grads)
            }
            "svg1_er" => {
                let settings = ReplaySettings {
                    steps: cfg.replay.steps,
                    batch_size: cfg.replay.batch_size,
                    beta: cfg.replay.beta,
                    w_max: cfg.replay.w_max,
                    v_max: cfg.v_max,
                    learn_std: cfg.policy.learn_std,
                };
                let rep = kl_regularized_replay_update(
                    &mut self.policy,
                    &self.db,
                    self.model.as_ref().expect("svg1_er has a model"),
                    self.v_critic.as_ref().expect("svg1_er has a critic"),
                    env,
                    &settings,
                    &mut self.policy_opt,
                    &mut self.replay_rng,
                )?;
                if let Some(reason) = rep.aborted {
                    return Err(Error::Diverged(reason));
                }
                if rep.steps > 0 {
                    self.acc.grad_pre.push(rep.grad_norm_pre);
                    self.acc.grad_post.push(rep.grad_norm_post);
                    self.acc.weight.push(rep.mean_weight);
                }
                None
            }
            other => return Err(Error::InvalidConfig(format!("unknown algorithm `{other}`"))),
        };
        if let Some(g) = grad {
            let norms = apply_policy_gradient(&mut self.policy, &g, cfg.v_max, cfg.policy.learn_std, &mut self.policy_opt)?;
            self.acc.grad_pre.push(norms.pre);
            self.acc.grad_post.push(norms.post);
        }
        Ok(())
    }

    fn row(&mut self, episodes_done: u64) -> Result<MetricsRow> {
        let e = &self.cfg.eval;
        let eval = evaluate_policy(
            &self.policy,
            self.env.as_ref(),
            e.episodes,
            self.episode_steps,
            e.stochastic,
            self.cfg.seed,
        )?;
        Ok(MetricsRow {
            step: self.env_steps,
            episode: episodes_done,
            eval_return: eval.mean_return,
            eval_final_metric: eval.mean_final_metric,
            model_nll: self.acc.model_nll.take(),
            value_loss: self.acc.value_loss.take(),
            grad_norm_pre: self.acc.grad_pre.take(),
            grad_norm_post: self.acc.grad_post.take(),
            mean_importance_weight: self.acc.weight.take(),
        })
    }

    fn write_checkpoints(&self, dir: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(dir.join("policy.ckpt"))?);
        self.policy.write_checkpoint(&mut w)?;
        if let Some(model) = &self.model {
            let mut w = BufWriter::new(File::create(dir.join("model.ckpt"))?);
            model.write_checkpoint(&mut w)?;
        }
        Ok(())
    }
}
