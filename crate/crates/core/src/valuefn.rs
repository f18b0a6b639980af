//! State-value and action-value critics trained by fitted policy evaluation.
//!
//! Each critic keeps an online network and a frozen target copy. Targets are
//! computed from the frozen copy only; it is replaced by the online network
//! every `sync_period` updates. The input standardization is refitted to the
//! database at those sync events, so target parameters never change between
//! syncs.

use rand::Rng;

use crate::diffcore::{Affine, DiffNetwork, Direction, Optimizer, ParamVector, ScaledNetwork};
use crate::error::{check_dim, Error, Result};
use crate::policy::ReparamGaussianPolicy;
use crate::replay::{importance_weight, ExperienceDatabase, Successor};
use crate::Vector;

pub const DEFAULT_SYNC_PERIOD: usize = 50;
const INPUT_MIN_SCALE: f64 = 1e-3;

/// Settings shared by both fitted-evaluation routines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaluationSettings {
    /// Number of parameter updates.
    pub updates: usize,
    /// Transitions per update; `1` is the per-sample scheme.
    pub batch_size: usize,
    pub w_max: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CriticReport {
    pub updates: usize,
    /// Samples dropped because their target was not finite.
    pub skipped: usize,
    /// Mean of `(w / 2) (y - V)^2` over the used samples.
    pub mean_loss: f64,
    pub mean_weight: f64,
    pub syncs: usize,
}

/// Network, frozen copy and sync bookkeeping shared by both critics.
#[derive(Clone, Debug, PartialEq)]
struct Critic {
    net: ScaledNetwork,
    target: ScaledNetwork,
    gamma: f64,
    sync_period: usize,
    updates_since_sync: usize,
    /// Horizon used to append the normalized time `t / T` to the input.
    time_horizon: Option<usize>,
    standardized: bool,
}

impl Critic {
    fn new(net: ScaledNetwork, gamma: f64, time_horizon: Option<usize>) -> Result<Self> {
        check_dim("critic output", 1, net.output_dim())?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("critic gamma {gamma} outside [0, 1]")));
        }
        if time_horizon == Some(0) {
            return Err(Error::InvalidConfig("critic time input needs a positive horizon".into()));
        }
        Ok(Critic {
            target: net.clone(),
            net,
            gamma,
            sync_period: DEFAULT_SYNC_PERIOD,
            updates_since_sync: 0,
            time_horizon,
            standardized: false,
        })
    }

    fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        value_scale: f64,
        gamma: f64,
        time_horizon: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = input_dim + time_horizon.is_some() as usize;
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut inner = DiffNetwork::random(&sizes, rng)?;
        let last = inner.num_layers() - 1;
        inner.weights_mut(last).fill(0.0);
        inner.bias_mut(last).fill(0.0);
        let output = Affine::new(Vector::zeros(1), Vector::from_element(1, value_scale))?;
        Self::new(ScaledNetwork::new(inner, Affine::identity(dim), output)?, gamma, time_horizon)
    }

    fn feature(&self, x: &Vector, t: usize) -> Vector {
        match self.time_horizon {
            None => x.clone(),
            Some(h) => {
                let mut out = Vector::zeros(x.len() + 1);
                out.rows_mut(0, x.len()).copy_from(x);
                out[x.len()] = t as f64 / h as f64;
                out
            }
        }
    }

    fn raw_dim(&self) -> usize {
        self.net.input_dim() - self.time_horizon.is_some() as usize
    }

    fn eval(&self, x: &Vector, t: usize) -> Result<f64> {
        check_dim("critic input", self.raw_dim(), x.len())?;
        Ok(self.net.forward(&self.feature(x, t))?[0])
    }

    fn eval_target(&self, x: &Vector, t: usize) -> Result<f64> {
        check_dim("critic input", self.raw_dim(), x.len())?;
        Ok(self.target.forward(&self.feature(x, t))?[0])
    }

    fn gradient(&self, x: &Vector, t: usize) -> Result<Vector> {
        check_dim("critic input", self.raw_dim(), x.len())?;
        let g = self.net.input_vjp(&self.feature(x, t), &Vector::from_element(1, 1.0))?;
        Ok(g.rows(0, x.len()).into_owned())
    }

    fn sync(&mut self, inputs: &[Vector]) -> Result<()> {
        if !inputs.is_empty() {
            let affine = Affine::from_samples(self.net.input_dim(), inputs.iter(), INPUT_MIN_SCALE)?;
            self.net.refit_input(affine)?;
        }
        self.target = self.net.clone();
        self.updates_since_sync = 0;
        self.standardized = true;
        Ok(())
    }

    /// One regression step towards `targets`, with per-sample weights.
    /// Returns the weighted loss sum.
    fn regress(&mut self, samples: &[(Vector, f64, f64)], opt: &mut Optimizer) -> Result<f64> {
        let mut grad = vec![0.0; self.net.num_params()];
        let scale = 1.0 / samples.len() as f64;
        let mut loss = 0.0;
        for (x, y, w) in samples {
            let tape = self.net.tape(x)?;
            let v = self.net.tape_output(&tape)[0];
            let err = y - v;
            loss += 0.5 * w * err * err;
            self.net
                .backward(&tape, &Vector::from_element(1, -w * err), Some((&mut grad, scale)))?;
        }
        let mut params = self.net.params();
        opt.apply(&mut params, &ParamVector::from_vec(grad), Direction::Descent)?;
        self.net.set_params(&params)?;
        self.updates_since_sync += 1;
        Ok(loss)
    }

    /// Runs `updates` weighted regression steps. `sample` draws one
    /// transition and returns `(feature, target, weight)`, or `None` when
    /// its target is not finite. `inputs` are the database features used to
    /// refit the standardization at sync events.
    fn fit<R, F>(
        &mut self,
        settings: &EvaluationSettings,
        inputs: &[Vector],
        opt: &mut Optimizer,
        rng: &mut R,
        mut sample: F,
    ) -> Result<CriticReport>
    where
        R: Rng + ?Sized,
        F: FnMut(&Critic, &mut R) -> Result<Option<(Vector, f64, f64)>>,
    {
        let mut report = CriticReport::default();
        if settings.updates == 0 {
            return Ok(report);
        }
        if !self.standardized {
            self.sync(inputs)?;
        }
        let mut used = 0usize;
        let mut loss = 0.0;
        let mut weight = 0.0;
        for _ in 0..settings.updates {
            let mut batch = Vec::with_capacity(settings.batch_size.max(1));
            for _ in 0..settings.batch_size.max(1) {
                match sample(self, rng)? {
                    Some(item) => batch.push(item),
                    None => report.skipped += 1,
                }
            }
            if !batch.is_empty() {
                used += batch.len();
                weight += batch.iter().map(|b| b.2).sum::<f64>();
                loss += self.regress(&batch, opt)?;
            }
            report.updates += 1;
            if self.updates_since_sync >= self.sync_period {
                self.sync(inputs)?;
                report.syncs += 1;
            }
        }
        if used > 0 {
            report.mean_loss = loss / used as f64;
            report.mean_weight = weight / used as f64;
        }
        if !report.mean_loss.is_finite() {
            return Err(Error::Diverged("critic loss is not finite".into()));
        }
        Ok(report)
    }
}

/// `V(s; nu)`, optionally time dependent.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueCritic {
    inner: Critic,
}

impl ValueCritic {
    pub fn new(net: ScaledNetwork, gamma: f64, time_horizon: Option<usize>) -> Result<Self> {
        Ok(ValueCritic {
            inner: Critic::new(net, gamma, time_horizon)?,
        })
    }

    /// Random hidden layers, zero output layer, output multiplied by `value_scale`.
    pub fn random<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        value_scale: f64,
        gamma: f64,
        time_horizon: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(ValueCritic {
            inner: Critic::random(state_dim, hidden, value_scale, gamma, time_horizon, rng)?,
        })
    }

    pub fn with_sync_period(mut self, period: usize) -> Self {
        self.inner.sync_period = period.max(1);
        self
    }

    pub fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    pub fn net(&self) -> &ScaledNetwork {
        &self.inner.net
    }

    pub fn params(&self) -> ParamVector {
        self.inner.net.params()
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        self.inner.net.set_params(p)
    }

    pub fn target_params(&self) -> ParamVector {
        self.inner.target.params()
    }

    pub fn updates_since_sync(&self) -> usize {
        self.inner.updates_since_sync
    }

    pub fn sync_period(&self) -> usize {
        self.inner.sync_period
    }

    pub fn value(&self, s: &Vector, t: usize) -> Result<f64> {
        self.inner.eval(s, t)
    }

    pub fn target_value(&self, s: &Vector, t: usize) -> Result<f64> {
        self.inner.eval_target(s, t)
    }

    /// `dV/ds` of the online network.
    pub fn value_gradient(&self, s: &Vector, t: usize) -> Result<Vector> {
        self.inner.gradient(s, t)
    }

    /// `delta = r + gamma V(s') - V(s)` with `V(s') = 0` for terminal transitions.
    pub fn td_error(&self, s: &Vector, t: usize, r: f64, s_next: &Vector, terminal: bool) -> Result<f64> {
        let next = if terminal {
            0.0
        } else {
            self.value(s_next, t + 1)?
        };
        Ok(r + self.inner.gamma * next - self.value(s, t)?)
    }

    /// Fitted policy evaluation of `policy` from the database.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        db: &ExperienceDatabase,
        policy: &ReparamGaussianPolicy,
        settings: &EvaluationSettings,
        opt: &mut Optimizer,
        rng: &mut R,
    ) -> Result<CriticReport> {
        if settings.updates > 0 && db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let inputs: Vec<Vector> = if settings.updates > 0 {
            db.iter().map(|tr| self.inner.feature(&tr.s, tr.t)).collect()
        } else {
            Vec::new()
        };
        let gamma = self.inner.gamma;
        self.inner.fit(settings, &inputs, opt, rng, |critic, rng| {
            let tr = db.sample(1, rng)?[0];
            let next = if tr.terminal {
                0.0
            } else {
                critic.eval_target(&tr.s_next, tr.t + 1)?
            };
            let y = tr.r + gamma * next;
            if !y.is_finite() {
                return Ok(None);
            }
            let w = importance_weight(policy, tr, settings.w_max)?;
            Ok(Some((critic.feature(&tr.s, tr.t), y, w)))
        })
    }
}

/// `Q(s, a; nu)`, optionally time dependent.
#[derive(Clone, Debug, PartialEq)]
pub struct QCritic {
    inner: Critic,
    state_dim: usize,
}

impl QCritic {
    pub fn new(net: ScaledNetwork, state_dim: usize, gamma: f64, time_horizon: Option<usize>) -> Result<Self> {
        let inner = Critic::new(net, gamma, time_horizon)?;
        if inner.raw_dim() <= state_dim {
            return Err(Error::InvalidConfig("QCritic input must include the action".into()));
        }
        Ok(QCritic { inner, state_dim })
    }

    pub fn random<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        value_scale: f64,
        gamma: f64,
        time_horizon: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(QCritic {
            inner: Critic::random(state_dim + action_dim, hidden, value_scale, gamma, time_horizon, rng)?,
            state_dim,
        })
    }

    pub fn with_sync_period(mut self, period: usize) -> Self {
        self.inner.sync_period = period.max(1);
        self
    }

    pub fn net(&self) -> &ScaledNetwork {
        &self.inner.net
    }

    pub fn params(&self) -> ParamVector {
        self.inner.net.params()
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        self.inner.net.set_params(p)
    }

    pub fn target_params(&self) -> ParamVector {
        self.inner.target.params()
    }

    pub fn updates_since_sync(&self) -> usize {
        self.inner.updates_since_sync
    }

    fn join(&self, s: &Vector, a: &Vector) -> Result<Vector> {
        check_dim("q critic state", self.state_dim, s.len())?;
        check_dim("q critic action", self.inner.raw_dim() - self.state_dim, a.len())?;
        Ok(Vector::from_iterator(s.len() + a.len(), s.iter().chain(a.iter()).copied()))
    }

    pub fn value(&self, s: &Vector, a: &Vector, t: usize) -> Result<f64> {
        self.inner.eval(&self.join(s, a)?, t)
    }

    pub fn target_value(&self, s: &Vector, a: &Vector, t: usize) -> Result<f64> {
        self.inner.eval_target(&self.join(s, a)?, t)
    }

    /// `dQ/da` of the online network.
    pub fn action_gradient(&self, s: &Vector, a: &Vector, t: usize) -> Result<Vector> {
        let g = self.inner.gradient(&self.join(s, a)?, t)?;
        Ok(g.rows(self.state_dim, a.len()).into_owned())
    }

    /// Fitted evaluation with targets `r + gamma Q(s', a')` using the stored
    /// successor action. When the successor is missing from the database the
    /// next action is drawn from the current policy instead.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        db: &ExperienceDatabase,
        policy: &ReparamGaussianPolicy,
        settings: &EvaluationSettings,
        opt: &mut Optimizer,
        rng: &mut R,
    ) -> Result<CriticReport> {
        if settings.updates > 0 && db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let inputs: Vec<Vector> = if settings.updates > 0 {
            db.iter()
                .map(|tr| Ok(self.inner.feature(&self.join(&tr.s, &tr.a)?, tr.t)))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let gamma = self.inner.gamma;
        let state_dim = self.state_dim;
        self.inner.fit(settings, &inputs, opt, rng, |critic, rng| {
            let smp = db.sample_with_successor(1, rng)?[0];
            let tr = smp.transition;
            let join = |s: &Vector, a: &Vector| Vector::from_iterator(state_dim + a.len(), s.iter().chain(a.iter()).copied());
            let next = match smp.successor {
                Successor::Terminal => 0.0,
                Successor::Action(a_next) => critic.eval_target(&join(&tr.s_next, a_next), tr.t + 1)?,
                Successor::Boundary => {
                    let (a_next, _) = policy.sample(&tr.s_next, rng)?;
                    critic.eval_target(&join(&tr.s_next, &a_next), tr.t + 1)?
                }
            };
            let y = tr.r + gamma * next;
            if !y.is_finite() {
                return Ok(None);
            }
            let w = importance_weight(policy, tr, settings.w_max)?;
            Ok(Some((critic.feature(&join(&tr.s, &tr.a), tr.t), y, w)))
        })
    }
}
