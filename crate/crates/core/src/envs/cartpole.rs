use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{
    apply_overrides, check_step_inputs, is_terminal, mask_clipped, Derivatives, EnvSpec, EnvState,
    Environment, StepResult,
};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from the pivot to the pole's centre of mass.
    pub pole_half_length: f64,
    pub gravity: f64,
    pub dt: f64,
    /// Standard deviation of the additive force noise, N.
    pub force_noise: f64,
    pub force_bound: f64,
    pub action_cost: f64,
    pub horizon: usize,
    pub gamma: f64,
    /// Standard deviation of the initial-state perturbation around hanging down.
    pub init_noise: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            gravity: 9.81,
            dt: 0.02,
            force_noise: 1.0,
            force_bound: 10.0,
            action_cost: 0.01,
            horizon: 500,
            gamma: 0.98,
            init_noise: 0.05,
        }
    }
}

impl CartPoleParams {
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut horizon = self.horizon as f64;
        apply_overrides(
            "cartpole",
            overrides,
            &mut [
                ("cart_mass", &mut self.cart_mass),
                ("pole_mass", &mut self.pole_mass),
                ("pole_half_length", &mut self.pole_half_length),
                ("gravity", &mut self.gravity),
                ("dt", &mut self.dt),
                ("force_noise", &mut self.force_noise),
                ("force_bound", &mut self.force_bound),
                ("action_cost", &mut self.action_cost),
                ("horizon", &mut horizon),
                ("gamma", &mut self.gamma),
                ("init_noise", &mut self.init_noise),
            ],
        )?;
        if horizon < 1.0 || horizon.fract() != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "cartpole horizon must be a positive integer, got {horizon}"
            )));
        }
        self.horizon = horizon as usize;
        Ok(self)
    }
}

/// Frictionless cart-pole swing-up.
///
/// State `[x, x_dot, theta, theta_dot]` with `theta = 0` upright; episodes
/// start hanging down. The applied force is `clip(a) + force_noise * xi[1]`;
/// other noise components are unused. Explicit Euler integration, reward
/// `cos(theta) - action_cost * a^2`.
#[derive(Clone, Debug)]
pub struct CartPoleSwingUp {
    params: CartPoleParams,
    spec: EnvSpec,
}

/// Accelerations and their partials with respect to `(theta, theta_dot, force)`.
struct Accel {
    x_acc: f64,
    th_acc: f64,
    dx: [f64; 3],
    dth: [f64; 3],
}

impl CartPoleSwingUp {
    pub fn new(params: CartPoleParams) -> Result<Self> {
        if !(params.cart_mass > 0.0
            && params.pole_mass > 0.0
            && params.pole_half_length > 0.0
            && params.dt > 0.0
            && params.force_bound > 0.0)
        {
            return Err(Error::InvalidConfig("cartpole constants must be positive".into()));
        }
        let spec = EnvSpec {
            id: "cartpole".into(),
            state_dim: 4,
            action_dim: 1,
            noise_dim: 4,
            horizon: Some(params.horizon),
            gamma: params.gamma,
            action_low: Vector::from_element(1, -params.force_bound),
            action_high: Vector::from_element(1, params.force_bound),
            state_scale: Vector::from_vec(vec![2.0, 3.0, PI, 6.0]),
            action_scale: Vector::from_element(1, params.force_bound),
        };
        spec.validate()?;
        Ok(CartPoleSwingUp { params, spec })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    fn accel(&self, theta: f64, omega: f64, force: f64) -> Accel {
        let p = &self.params;
        let total = p.cart_mass + p.pole_mass;
        let ml = p.pole_mass * p.pole_half_length;
        let (sin, cos) = theta.sin_cos();

        let temp = (force + ml * omega * omega * sin) / total;
        let temp_d = [ml * omega * omega * cos / total, 2.0 * ml * omega * sin / total, 1.0 / total];

        let den = p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total);
        let den_th = p.pole_half_length * 2.0 * p.pole_mass * cos * sin / total;

        let num = p.gravity * sin - cos * temp;
        let num_d = [
            p.gravity * cos + sin * temp - cos * temp_d[0],
            -cos * temp_d[1],
            -cos * temp_d[2],
        ];
        let th_acc = num / den;
        let dth = [
            (num_d[0] * den - num * den_th) / (den * den),
            num_d[1] / den,
            num_d[2] / den,
        ];

        let x_acc = temp - ml * th_acc * cos / total;
        let dx = [
            temp_d[0] - ml / total * (dth[0] * cos - th_acc * sin),
            temp_d[1] - ml / total * dth[1] * cos,
            temp_d[2] - ml / total * dth[2] * cos,
        ];
        Accel { x_acc, th_acc, dx, dth }
    }
}

impl Environment for CartPoleSwingUp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut dyn RngCore) -> EnvState {
        let sd = self.params.init_noise;
        let mut s = Vector::from_vec(vec![0.0, 0.0, PI, 0.0]);
        if sd > 0.0 {
            for v in s.iter_mut() {
                *v += sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        EnvState::new(s, 0)
    }

    fn step_reparam(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<StepResult> {
        check_step_inputs(&self.spec, state, a, xi)?;
        let (ac, mask) = self.spec.clip_action(a);
        let s = &state.s;
        let force = ac[0] + self.params.force_noise * xi[1];
        let acc = self.accel(s[2], s[3], force);
        let dt = self.params.dt;
        let next = Vector::from_vec(vec![
            s[0] + dt * s[1],
            s[1] + dt * acc.x_acc,
            s[2] + dt * s[3],
            s[3] + dt * acc.th_acc,
        ]);
        Ok(StepResult {
            next_state: next,
            reward: self.reward(s, a, state.t),
            terminal: is_terminal(&self.spec, state.t),
            clipped: mask[0],
        })
    }

    fn reward(&self, s: &Vector, a: &Vector, _t: usize) -> f64 {
        s[2].cos() - self.params.action_cost * a.norm_squared()
    }

    fn reward_derivatives(&self, s: &Vector, a: &Vector, _t: usize) -> (Vector, Vector) {
        let r_s = Vector::from_vec(vec![0.0, 0.0, -s[2].sin(), 0.0]);
        (r_s, a * (-2.0 * self.params.action_cost))
    }

    fn true_derivatives(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<Derivatives> {
        check_step_inputs(&self.spec, state, a, xi)?;
        let (ac, mask) = self.spec.clip_action(a);
        let s = &state.s;
        let force = ac[0] + self.params.force_noise * xi[1];
        let acc = self.accel(s[2], s[3], force);
        let dt = self.params.dt;
        let mut f_s = Matrix::identity(4, 4);
        f_s[(0, 1)] = dt;
        f_s[(1, 2)] = dt * acc.dx[0];
        f_s[(1, 3)] = dt * acc.dx[1];
        f_s[(2, 3)] = dt;
        f_s[(3, 2)] = dt * acc.dth[0];
        f_s[(3, 3)] = 1.0 + dt * acc.dth[1];
        let mut f_a = Matrix::zeros(4, 1);
        f_a[(1, 0)] = dt * acc.dx[2];
        f_a[(3, 0)] = dt * acc.dth[2];
        mask_clipped(&mut f_a, &mask);
        let (r_s, r_a) = self.reward_derivatives(s, a, state.t);
        Ok(Derivatives { f_s, f_a, r_s, r_a })
    }

    fn is_differentiable(&self) -> bool {
        true
    }
}
