//! Policy-gradient estimators and the policy updates built on them.
//!
//! - [`svg_inf_gradient`]: backpropagation through a whole trajectory with a
//!   dynamics model (real or simulated trace).
//! - [`svg1_gradient`]: one step through the model, then the critic's value
//!   gradient, importance-weighted for replayed data.
//! - [`svg0_gradient`]: the action-value critic's action gradient.
//! - [`planner_gradient`]: [`svg_inf_gradient`] on trajectories sampled from the model.
//! - [`actor_critic_gradient`]: the likelihood-ratio baseline.

mod estimators;
mod recursion;
mod replay_update;
mod trace;

use crate::diffcore::{Direction, Optimizer, ParamVector};
use crate::error::{Error, Result};
use crate::policy::ReparamGaussianPolicy;

pub use estimators::{
    actor_critic_gradient, mean_gradient, ActionValueGradient, StateValueGradient, planner_gradient, svg0_gradient, svg1_gradient, Svg1Sample,
};
pub use recursion::{deterministic_recursion, svg_inf_gradient, GradientAccumulator};
pub use replay_update::{kl_regularized_replay_update, ReplayReport, ReplaySettings};
pub use trace::{
    rollout_with_noises, simulate, DifferentiableDynamics, RolloutTrace, TraceSource, TraceStep, TrueDynamics,
};

/// Algorithm identifiers accepted by the harness.
pub const ALGORITHMS: [&str; 6] = ["svg_inf", "svg1", "svg1_er", "svg0", "planner", "ac"];

/// `g / |g| * min(v_max, |g|)`.
///
/// Gradients within a few ulps of the bound are returned unchanged so that
/// clipping is exactly idempotent.
pub fn clip_gradient(g: &ParamVector, v_max: f64) -> Result<ParamVector> {
    if !(v_max > 0.0) {
        return Err(Error::InvalidConfig(format!("v_max must be > 0, got {v_max}")));
    }
    let norm = g.norm();
    if norm <= v_max * (1.0 + 4.0 * f64::EPSILON) {
        Ok(g.clone())
    } else {
        Ok(g.scaled(v_max / norm))
    }
}

/// Norms of a policy step before and after clipping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepNorms {
    pub pre: f64,
    pub post: f64,
}

/// Clips `g` and takes one ascent step on the policy parameters.
pub fn apply_policy_gradient(
    policy: &mut ReparamGaussianPolicy,
    g: &ParamVector,
    v_max: f64,
    learn_std: bool,
    opt: &mut Optimizer,
) -> Result<StepNorms> {
    let mut g = g.clone();
    if !learn_std {
        policy.freeze_std(&mut g);
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("policy gradient".into()));
    }
    let clipped = clip_gradient(&g, v_max)?;
    let mut theta = policy.params();
    opt.apply(&mut theta, &clipped, Direction::Ascent)?;
    if !theta.is_finite() {
        return Err(Error::NonFinite("policy parameters".into()));
    }
    policy.set_params(&theta)?;
    Ok(StepNorms {
        pre: g.norm(),
        post: clipped.norm(),
    })
}
