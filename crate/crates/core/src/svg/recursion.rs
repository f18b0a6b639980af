use crate::diffcore::ParamVector;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::policy::ReparamGaussianPolicy;
use crate::Vector;

use super::trace::{DifferentiableDynamics, RolloutTrace};

/// Running state `(v_s, v_theta)` of the backward recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientAccumulator {
    pub v_s: Vector,
    pub v_theta: ParamVector,
}

impl GradientAccumulator {
    pub fn new(state_dim: usize, num_params: usize) -> Self {
        GradientAccumulator {
            v_s: Vector::zeros(state_dim),
            v_theta: ParamVector::zeros(num_params),
        }
    }

    pub fn reset(&mut self) {
        self.v_s.fill(0.0);
        self.v_theta.as_mut_slice().fill(0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.v_s.iter().all(|v| v.is_finite()) && self.v_theta.is_finite()
    }
}

/// Backpropagates the value gradient through a trace, returning `v_theta` at
/// its first step.
///
/// Backward from the last step with `v' = 0` after the final or terminal step:
///
/// - `g_a = r_a + gamma * f_a^T v'_s`
/// - `v_theta = g_a^T pi_theta + gamma * v'_theta`
/// - `v_s = r_s + g_a^T pi_s + gamma * f_s^T v'_s`
///
/// Noises `eta` are required at every step and `xi` wherever a successor
/// contributes.
pub fn svg_inf_gradient(
    trace: &RolloutTrace,
    dynamics: &dyn DifferentiableDynamics,
    policy: &ReparamGaussianPolicy,
    env: &dyn Environment,
    gamma: f64,
) -> Result<ParamVector> {
    let n = trace.len();
    let mut acc = GradientAccumulator::new(policy.state_dim(), policy.num_params());
    for (i, st) in trace.steps.iter().enumerate().rev() {
        let eta = st.eta.as_ref().ok_or(Error::MissingNoise { step: i })?;
        let d = policy.derivatives(&st.s, eta)?;
        let (mut v_s, mut g_a) = env.reward_derivatives(&st.s, &st.a, st.t);
        if i + 1 == n || st.terminal {
            acc.reset();
        } else {
            let xi = st.xi.as_ref().ok_or(Error::MissingNoise { step: i })?;
            let (f_s, f_a) = dynamics.jacobians(&st.s, st.t, &st.a, xi)?;
            g_a += gamma * f_a.tr_mul(&acc.v_s);
            v_s += gamma * f_s.tr_mul(&acc.v_s);
            acc.v_theta.scale(gamma);
        }
        let ds = d.backward(&g_a, acc.v_theta.as_mut_slice(), 1.0)?;
        acc.v_s = v_s + ds;
        if !acc.is_finite() {
            return Err(Error::NonFiniteAccumulator { step: i });
        }
    }
    Ok(acc.v_theta)
}

/// The deterministic value-gradient recursion: [`svg_inf_gradient`] on a trace
/// whose noises are all zero.
pub fn deterministic_recursion(
    trace: &RolloutTrace,
    dynamics: &dyn DifferentiableDynamics,
    policy: &ReparamGaussianPolicy,
    env: &dyn Environment,
    gamma: f64,
) -> Result<ParamVector> {
    for (i, st) in trace.steps.iter().enumerate() {
        let zero = |v: &Option<Vector>| v.as_ref().is_some_and(|x| x.iter().all(|e| *e == 0.0));
        if !zero(&st.eta) || !zero(&st.xi) {
            return Err(Error::InvalidConfig(format!(
                "deterministic recursion needs zero noises; step {i} has noise"
            )));
        }
    }
    svg_inf_gradient(trace, dynamics, policy, env, gamma)
}
