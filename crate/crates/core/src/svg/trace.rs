use rand::Rng;

use crate::dynmodel::DynamicsModel;
use crate::envs::{EnvState, Environment};
use crate::error::{check_dim, Error, Result};
use crate::policy::ReparamGaussianPolicy;
use crate::replay::Transition;
use crate::rng::standard_normal;
use crate::{Matrix, Vector};

/// A re-parameterized transition `s' = f(s, a, xi)` with Jacobians.
pub trait DifferentiableDynamics {
    fn noise_dim(&self) -> usize;

    fn next_state(&self, s: &Vector, t: usize, a: &Vector, xi: &Vector) -> Result<Vector>;

    /// `(f_s, f_a)` at `(s, a, xi)`.
    fn jacobians(&self, s: &Vector, t: usize, a: &Vector, xi: &Vector) -> Result<(Matrix, Matrix)>;
}

impl DifferentiableDynamics for DynamicsModel {
    fn noise_dim(&self) -> usize {
        self.state_dim()
    }

    fn next_state(&self, s: &Vector, _t: usize, a: &Vector, xi: &Vector) -> Result<Vector> {
        self.predict(s, a, xi)
    }

    fn jacobians(&self, s: &Vector, _t: usize, a: &Vector, xi: &Vector) -> Result<(Matrix, Matrix)> {
        check_dim("model noise", self.state_dim(), xi.len())?;
        DynamicsModel::jacobians(self, s, a)
    }
}

/// The environment's own transition, used in place of a learned model.
#[derive(Clone, Copy)]
pub struct TrueDynamics<'a>(pub &'a dyn Environment);

impl DifferentiableDynamics for TrueDynamics<'_> {
    fn noise_dim(&self) -> usize {
        self.0.spec().noise_dim
    }

    fn next_state(&self, s: &Vector, t: usize, a: &Vector, xi: &Vector) -> Result<Vector> {
        Ok(self.0.step_reparam(&EnvState::new(s.clone(), t), a, xi)?.next_state)
    }

    fn jacobians(&self, s: &Vector, t: usize, a: &Vector, xi: &Vector) -> Result<(Matrix, Matrix)> {
        let d = self.0.true_derivatives(&EnvState::new(s.clone(), t), a, xi)?;
        Ok((d.f_s, d.f_a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSource {
    /// Collected in the environment; noises are inferred afterwards.
    Real,
    /// Forward-sampled through a dynamics model with known noises.
    Simulated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub s: Vector,
    pub t: usize,
    pub eta: Option<Vector>,
    pub a: Vector,
    pub xi: Option<Vector>,
    pub r: f64,
    pub s_next: Vector,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutTrace {
    pub source: TraceSource,
    pub steps: Vec<TraceStep>,
}

impl RolloutTrace {
    /// A real trace from consecutive transitions of one episode, without noises.
    pub fn from_transitions<'a>(transitions: impl IntoIterator<Item = &'a Transition>) -> Self {
        let steps = transitions
            .into_iter()
            .map(|tr| TraceStep {
                s: tr.s.clone(),
                t: tr.t,
                eta: None,
                a: tr.a.clone(),
                xi: None,
                r: tr.r,
                s_next: tr.s_next.clone(),
                terminal: tr.terminal,
            })
            .collect();
        RolloutTrace {
            source: TraceSource::Real,
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.steps.iter().rev().fold(0.0, |acc, st| st.r + gamma * acc)
    }

    /// Fills `eta | (s, a)` from the policy and `xi | (s, a, s')` from the model.
    pub fn infer_noises(&mut self, policy: &ReparamGaussianPolicy, model: &DynamicsModel) -> Result<()> {
        for st in &mut self.steps {
            st.eta = Some(policy.infer_noise(&st.s, &st.a)?);
            st.xi = Some(model.infer_noise(&st.s, &st.a, &st.s_next)?);
        }
        Ok(())
    }
}

/// Rolls the policy through `dynamics` from `start` with the given noises.
///
/// Rewards and episode ends come from `env`; the rollout stops after
/// `etas.len()` steps or at the terminal step.
pub fn rollout_with_noises(
    dynamics: &dyn DifferentiableDynamics,
    policy: &ReparamGaussianPolicy,
    env: &dyn Environment,
    start: &EnvState,
    etas: &[Vector],
    xis: &[Vector],
) -> Result<RolloutTrace> {
    check_dim("rollout noises", etas.len(), xis.len())?;
    let mut steps = Vec::with_capacity(etas.len());
    let mut s = start.s.clone();
    let mut t = start.t;
    for (eta, xi) in etas.iter().zip(xis) {
        let step = simulate_step(dynamics, policy, env, s, t, eta.clone(), xi.clone())?;
        let done = step.terminal;
        s = step.s_next.clone();
        t += 1;
        steps.push(step);
        if done {
            break;
        }
    }
    Ok(RolloutTrace {
        source: TraceSource::Simulated,
        steps,
    })
}

/// Like [`rollout_with_noises`] but draws `eta` then `xi` from `rng` at each step.
pub fn simulate<R: Rng + ?Sized>(
    dynamics: &dyn DifferentiableDynamics,
    policy: &ReparamGaussianPolicy,
    env: &dyn Environment,
    start: &EnvState,
    max_steps: usize,
    rng: &mut R,
) -> Result<RolloutTrace> {
    let mut steps = Vec::with_capacity(max_steps);
    let mut s = start.s.clone();
    let mut t = start.t;
    for _ in 0..max_steps {
        let eta = standard_normal(rng, policy.action_dim());
        let xi = standard_normal(rng, dynamics.noise_dim());
        let step = simulate_step(dynamics, policy, env, s, t, eta, xi)?;
        let done = step.terminal;
        s = step.s_next.clone();
        t += 1;
        steps.push(step);
        if done {
            break;
        }
    }
    Ok(RolloutTrace {
        source: TraceSource::Simulated,
        steps,
    })
}

fn simulate_step(
    dynamics: &dyn DifferentiableDynamics,
    policy: &ReparamGaussianPolicy,
    env: &dyn Environment,
    s: Vector,
    t: usize,
    eta: Vector,
    xi: Vector,
) -> Result<TraceStep> {
    let a = policy.act(&s, &eta)?;
    let s_next = dynamics.next_state(&s, t, &a, &xi)?;
    if s_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("simulated state at step {t}")));
    }
    Ok(TraceStep {
        r: env.reward(&s, &a, t),
        terminal: env.spec().horizon.is_some_and(|h| t >= h),
        s,
        t,
        eta: Some(eta),
        a,
        xi: Some(xi),
        s_next,
    })
}
