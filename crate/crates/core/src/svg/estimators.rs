use rand::Rng;

use crate::diffcore::ParamVector;
use crate::dynmodel::DynamicsModel;
use crate::envs::{EnvState, Environment};
use crate::error::Result;
use crate::policy::ReparamGaussianPolicy;
use crate::replay::{importance_weight, Transition};
use crate::valuefn::{QCritic, ValueCritic};
use crate::Vector;

use super::recursion::svg_inf_gradient;
use super::trace::{simulate, DifferentiableDynamics, RolloutTrace};

/// A critic that supplies `V_s(s, t)` and its discount.
pub trait StateValueGradient {
    fn gamma(&self) -> f64;
    fn value_gradient(&self, s: &Vector, t: usize) -> Result<Vector>;
}

impl StateValueGradient for ValueCritic {
    fn gamma(&self) -> f64 {
        ValueCritic::gamma(self)
    }

    fn value_gradient(&self, s: &Vector, t: usize) -> Result<Vector> {
        ValueCritic::value_gradient(self, s, t)
    }
}

/// A critic that supplies `Q_a(s, a, t)`.
pub trait ActionValueGradient {
    fn action_gradient(&self, s: &Vector, a: &Vector, t: usize) -> Result<Vector>;
}

impl ActionValueGradient for QCritic {
    fn action_gradient(&self, s: &Vector, a: &Vector, t: usize) -> Result<Vector> {
        QCritic::action_gradient(self, s, a, t)
    }
}

/// One SVG(1) gradient sample and the importance weight it carries.
#[derive(Clone, Debug, PartialEq)]
pub struct Svg1Sample {
    pub gradient: ParamVector,
    pub weight: f64,
}

/// `w * (r_a + gamma * V_s'(s')^T f_a)^T pi_theta` at the noise inferred for `tr`.
///
/// The discount is the critic's. The model's Jacobians do not depend on its
/// additive noise, so only `eta` is inferred.
pub fn svg1_gradient(
    tr: &Transition,
    model: &DynamicsModel,
    policy: &ReparamGaussianPolicy,
    critic: &dyn StateValueGradient,
    env: &dyn Environment,
    w_max: f64,
) -> Result<Svg1Sample> {
    let weight = importance_weight(policy, tr, w_max)?;
    let eta = policy.infer_noise(&tr.s, &tr.a)?;
    let d = policy.derivatives(&tr.s, &eta)?;
    let (_, mut g_a) = env.reward_derivatives(&tr.s, &tr.a, tr.t);
    let gamma = critic.gamma();
    if !tr.terminal && gamma != 0.0 {
        let v_next = critic.value_gradient(&tr.s_next, tr.t + 1)?;
        let (_, f_a) = model.jacobians(&tr.s, &tr.a)?;
        g_a += gamma * f_a.tr_mul(&v_next);
    }
    let mut gradient = d.theta_vjp(&g_a)?;
    gradient.scale(weight);
    Ok(Svg1Sample { gradient, weight })
}

/// `Q_a(s, a)^T pi_theta` at the noise inferred for `tr`.
pub fn svg0_gradient(tr: &Transition, critic: &dyn ActionValueGradient, policy: &ReparamGaussianPolicy) -> Result<ParamVector> {
    let eta = policy.infer_noise(&tr.s, &tr.a)?;
    let d = policy.derivatives(&tr.s, &eta)?;
    let q_a = critic.action_gradient(&tr.s, &d.action(), tr.t)?;
    d.theta_vjp(&q_a)
}

/// Likelihood-ratio gradient `delta * d/d(theta) log pi(a | s)`.
pub fn actor_critic_gradient(tr: &Transition, critic: &ValueCritic, policy: &ReparamGaussianPolicy) -> Result<ParamVector> {
    let delta = critic.td_error(&tr.s, tr.t, tr.r, &tr.s_next, tr.terminal)?;
    let mut g = policy.score(&tr.s, &tr.a)?;
    g.scale(delta);
    Ok(g)
}

/// Samples a trajectory of up to `max_steps` entirely through `dynamics` and
/// backpropagates along it.
///
/// With a learned model the noise `xi ~ N(0, I)` is scaled by the model's
/// learned standard deviations.
pub fn planner_gradient<R: Rng + ?Sized>(
    dynamics: &dyn DifferentiableDynamics,
    policy: &ReparamGaussianPolicy,
    env: &dyn Environment,
    start: &EnvState,
    max_steps: usize,
    rng: &mut R,
) -> Result<(ParamVector, RolloutTrace)> {
    let trace = simulate(dynamics, policy, env, start, max_steps, rng)?;
    let g = svg_inf_gradient(&trace, dynamics, policy, env, env.spec().gamma)?;
    Ok((g, trace))
}

/// Mean of per-sample gradients; `None` for an empty batch.
pub fn mean_gradient(grads: impl IntoIterator<Item = ParamVector>) -> Option<ParamVector> {
    let mut sum: Option<ParamVector> = None;
    let mut n = 0usize;
    for g in grads {
        match &mut sum {
            Some(s) => s.add_scaled(1.0, &g),
            None => sum = Some(g),
        }
        n += 1;
    }
    sum.map(|s| s.scaled(1.0 / n as f64))
}
