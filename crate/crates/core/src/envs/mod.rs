//! Stochastic environments with a re-parameterized transition `s' = f(s, a, xi)`.
//!
//! Every environment exposes the black-box [`Environment::step`] used by the
//! training loops and the deterministic [`Environment::step_reparam`] that
//! takes the standard-normal noise `xi` explicitly. All shipped environments
//! are differentiable and provide exact [`Derivatives`] of the re-parameterized
//! step and of the reward, which the gradient audits use as ground truth.
//!
//! Finite-horizon episodes run the steps `t = 0..=T`; the step taken at
//! `t = T` is terminal. Actions outside the bounds are clipped before they
//! reach the dynamics (the clipped columns of `f_a` are zero) while the reward
//! is always evaluated on the raw action.

mod cartpole;
mod hand;
mod lqg;

use std::collections::BTreeMap;

use rand::RngCore;

use crate::error::{check_dim, Error, Result};
use crate::rng::standard_normal;
use crate::{Matrix, Vector};

pub use cartpole::{CartPoleParams, CartPoleSwingUp};
pub use hand::{Hand, HandParams, HAND_TARGETS};
pub use lqg::{discounted_lqr, LinearPolicyValue, Lqg, LqgParams};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub noise_dim: usize,
    /// Last step index `T` of a finite-horizon episode; `None` for infinite horizon.
    pub horizon: Option<usize>,
    pub gamma: f64,
    pub action_low: Vector,
    pub action_high: Vector,
    /// Typical magnitude of each state coordinate, used to scale policy inputs.
    pub state_scale: Vector,
    /// Natural magnitude of each action coordinate, used to scale policy outputs.
    pub action_scale: Vector,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.horizon.is_none() && self.gamma >= 1.0 {
            return Err(Error::InvalidConfig(
                "infinite-horizon environments need gamma < 1".into(),
            ));
        }
        check_dim("EnvSpec action_low", self.action_dim, self.action_low.len())?;
        check_dim("EnvSpec action_high", self.action_dim, self.action_high.len())?;
        check_dim("EnvSpec state_scale", self.state_dim, self.state_scale.len())?;
        check_dim("EnvSpec action_scale", self.action_dim, self.action_scale.len())?;
        Ok(())
    }

    /// Clips `a` to the bounds; the mask marks dimensions that were clipped.
    pub fn clip_action(&self, a: &Vector) -> (Vector, Vec<bool>) {
        let mut out = a.clone();
        let mut mask = vec![false; a.len()];
        for i in 0..a.len() {
            if a[i] < self.action_low[i] {
                out[i] = self.action_low[i];
                mask[i] = true;
            } else if a[i] > self.action_high[i] {
                out[i] = self.action_high[i];
                mask[i] = true;
            }
        }
        (out, mask)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub s: Vector,
    pub t: usize,
}

impl EnvState {
    pub fn new(s: Vector, t: usize) -> Self {
        EnvState { s, t }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vector,
    pub reward: f64,
    pub terminal: bool,
    pub clipped: bool,
}

/// Exact derivatives of one re-parameterized step and its reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    pub f_s: Matrix,
    pub f_a: Matrix,
    pub r_s: Vector,
    pub r_a: Vector,
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Samples the initial state.
    fn reset(&self, rng: &mut dyn RngCore) -> EnvState;

    /// Deterministic transition for a given standard-normal noise `xi`.
    fn step_reparam(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<StepResult>;

    /// Reward `r(s, a, t)`.
    fn reward(&self, s: &Vector, a: &Vector, t: usize) -> f64;

    /// Reward derivatives `(r_s, r_a)` at `(s, a, t)`.
    fn reward_derivatives(&self, s: &Vector, a: &Vector, t: usize) -> (Vector, Vector);

    /// Exact derivatives of [`step_reparam`](Self::step_reparam) and the reward.
    fn true_derivatives(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<Derivatives> {
        let _ = (state, a, xi);
        Err(Error::Unsupported(format!(
            "environment `{}` has no analytic derivatives",
            self.spec().id
        )))
    }

    fn is_differentiable(&self) -> bool {
        false
    }

    /// Environment-specific quality of a final state (Hand: distance term).
    fn final_metric(&self, state: &EnvState) -> Option<f64> {
        let _ = state;
        None
    }

    /// One stochastic transition: `step_reparam` with `xi ~ N(0, I)`.
    fn step(&self, state: &EnvState, a: &Vector, rng: &mut dyn RngCore) -> Result<StepResult> {
        let xi = standard_normal(rng, self.spec().noise_dim);
        self.step_reparam(state, a, &xi)
    }
}

/// Validates the inputs every `step_reparam` shares.
pub(crate) fn check_step_inputs(spec: &EnvSpec, state: &EnvState, a: &Vector, xi: &Vector) -> Result<()> {
    check_dim("step state", spec.state_dim, state.s.len())?;
    check_dim("step action", spec.action_dim, a.len())?;
    check_dim("step noise", spec.noise_dim, xi.len())?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }
    Ok(())
}

pub(crate) fn is_terminal(spec: &EnvSpec, t: usize) -> bool {
    spec.horizon.is_some_and(|h| t >= h)
}

pub(crate) fn mask_clipped(f_a: &mut Matrix, mask: &[bool]) {
    for (j, &clipped) in mask.iter().enumerate() {
        if clipped {
            f_a.column_mut(j).fill(0.0);
        }
    }
}

pub const ENV_IDS: [&str; 3] = ["hand", "cartpole", "lqg"];

/// Builds an environment from its id and scalar overrides of its constants.
pub fn make_env(id: &str, overrides: &BTreeMap<String, f64>) -> Result<Box<dyn Environment>> {
    match id {
        "hand" => Ok(Box::new(Hand::new(HandParams::default().with_overrides(overrides)?)?)),
        "cartpole" => Ok(Box::new(CartPoleSwingUp::new(
            CartPoleParams::default().with_overrides(overrides)?,
        )?)),
        "lqg" => Ok(Box::new(Lqg::new(LqgParams::default().with_overrides(overrides)?)?)),
        other => Err(Error::InvalidConfig(format!(
            "unknown environment `{other}`; expected one of {ENV_IDS:?}"
        ))),
    }
}

/// Applies `overrides` to named `f64` fields, rejecting unknown keys.
pub(crate) fn apply_overrides(
    env: &str,
    overrides: &BTreeMap<String, f64>,
    fields: &mut [(&str, &mut f64)],
) -> Result<()> {
    for (key, value) in overrides {
        match fields.iter_mut().find(|(name, _)| name == key) {
            Some((_, slot)) => **slot = *value,
            None => {
                let known: Vec<&str> = fields.iter().map(|(n, _)| *n).collect();
                return Err(Error::InvalidConfig(format!(
                    "unknown {env} override `{key}`; known keys: {known:?}"
                )));
            }
        }
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factory_and_overrides() {
        assert_eq!(make_env("hand", &BTreeMap::new()).unwrap().spec().state_dim, 8);
        assert!(make_env("mujoco", &BTreeMap::new()).is_err());
        let mut o = BTreeMap::new();
        o.insert("bogus".to_string(), 1.0);
        assert!(make_env("lqg", &o).is_err());
        let mut o = BTreeMap::new();
        o.insert("horizon".to_string(), 200.0);
        assert_eq!(make_env("hand", &o).unwrap().spec().horizon, Some(200));
    }

    #[test]
    fn infinite_horizon_requires_discount() {
        let mut o = BTreeMap::new();
        o.insert("gamma".to_string(), 1.0);
        assert!(make_env("lqg", &o).is_err());
    }
}
