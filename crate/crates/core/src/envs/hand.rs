use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use super::{
    apply_overrides, check_step_inputs, is_terminal, mask_clipped, Derivatives, EnvSpec, EnvState,
    Environment, StepResult,
};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// The two target ball positions; one is drawn uniformly at every reset.
pub const HAND_TARGETS: [[f64; 2]; 2] = [[-1.0, 1.0], [1.0, 1.0]];

// state layout
const HAND: usize = 0;
const BALL: usize = 2;
const VEL: usize = 4;
const TARGET: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct HandParams {
    /// N/m
    pub spring: f64,
    /// kg
    pub mass: f64,
    pub gravity: f64,
    /// Standard deviation of the random force on the ball, N.
    pub force_noise: f64,
    /// Weight of the squared action before the final step (negative).
    pub alpha1: f64,
    /// Weight of the final distance term (negative).
    pub alpha2: f64,
    pub dt: f64,
    pub horizon: usize,
    pub gamma: f64,
    /// Bound on each hand-velocity component.
    pub action_bound: f64,
    /// Half-width of the uniform initial hand position.
    pub init_spread: f64,
}

impl Default for HandParams {
    fn default() -> Self {
        HandParams {
            spring: 10.0,
            mass: 1.0,
            gravity: 9.81,
            force_noise: 1.0,
            alpha1: -0.1,
            alpha2: -10.0,
            dt: 0.01,
            horizon: 1000,
            gamma: 1.0,
            action_bound: 10.0,
            init_spread: 0.1,
        }
    }
}

impl HandParams {
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut horizon = self.horizon as f64;
        apply_overrides(
            "hand",
            overrides,
            &mut [
                ("spring", &mut self.spring),
                ("mass", &mut self.mass),
                ("gravity", &mut self.gravity),
                ("force_noise", &mut self.force_noise),
                ("alpha1", &mut self.alpha1),
                ("alpha2", &mut self.alpha2),
                ("dt", &mut self.dt),
                ("horizon", &mut horizon),
                ("gamma", &mut self.gamma),
                ("action_bound", &mut self.action_bound),
                ("init_spread", &mut self.init_spread),
            ],
        )?;
        if horizon < 1.0 || horizon.fract() != 0.0 {
            return Err(Error::InvalidConfig(format!("hand horizon must be a positive integer, got {horizon}")));
        }
        self.horizon = horizon as usize;
        Ok(self)
    }
}

/// Point-mass hand with directly controlled velocity, coupled by a linear
/// spring to a ball under gravity and random force.
///
/// State `[hand_x, hand_y, ball_x, ball_y, ball_vx, ball_vy, target_x, target_y]`,
/// action = hand velocity. One step of semi-implicit Euler:
///
/// ```text
/// hand' = hand + dt a
/// vel'  = vel + dt ((k/m)(hand - ball) - g e_y + (sigma_f/m) xi[4..6])
/// ball' = ball + dt vel'
/// ```
///
/// Only `xi[4]` and `xi[5]` are used. Reward is `alpha1 |a|^2` for `t < T` and
/// `alpha2 (|hand| + |ball - target|)` at `t = T`.
#[derive(Clone, Debug)]
pub struct Hand {
    params: HandParams,
    spec: EnvSpec,
}

impl Hand {
    pub fn new(params: HandParams) -> Result<Self> {
        if !(params.mass > 0.0 && params.dt > 0.0 && params.action_bound > 0.0) {
            return Err(Error::InvalidConfig("hand mass, dt and action bound must be positive".into()));
        }
        let spec = EnvSpec {
            id: "hand".into(),
            state_dim: 8,
            action_dim: 2,
            noise_dim: 8,
            horizon: Some(params.horizon),
            gamma: params.gamma,
            action_low: Vector::from_element(2, -params.action_bound),
            action_high: Vector::from_element(2, params.action_bound),
            state_scale: Vector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0]),
            action_scale: Vector::from_element(2, 1.0),
        };
        spec.validate()?;
        Ok(Hand { params, spec })
    }

    pub fn params(&self) -> &HandParams {
        &self.params
    }

    /// `|hand| + |ball - target|` of a state.
    pub fn distance_term(s: &Vector) -> f64 {
        let hand = (s[HAND].powi(2) + s[HAND + 1].powi(2)).sqrt();
        let ball = ((s[BALL] - s[TARGET]).powi(2) + (s[BALL + 1] - s[TARGET + 1]).powi(2)).sqrt();
        hand + ball
    }
}

impl Environment for Hand {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut dyn RngCore) -> EnvState {
        let w = self.params.init_spread;
        let hx = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
        let hy = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
        let target = HAND_TARGETS[rng.random_range(0..HAND_TARGETS.len())];
        let s = Vector::from_vec(vec![hx, hy, hx, hy, 0.0, 0.0, target[0], target[1]]);
        EnvState::new(s, 0)
    }

    fn step_reparam(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<StepResult> {
        check_step_inputs(&self.spec, state, a, xi)?;
        let p = &self.params;
        let (ac, mask) = self.spec.clip_action(a);
        let s = &state.s;
        let mut next = s.clone();
        let k_m = p.spring / p.mass;
        for d in 0..2 {
            next[HAND + d] = s[HAND + d] + p.dt * ac[d];
            let gravity = if d == 1 { -p.gravity } else { 0.0 };
            let accel = k_m * (s[HAND + d] - s[BALL + d]) + gravity + p.force_noise / p.mass * xi[VEL + d];
            next[VEL + d] = s[VEL + d] + p.dt * accel;
            next[BALL + d] = s[BALL + d] + p.dt * next[VEL + d];
        }
        Ok(StepResult {
            next_state: next,
            reward: self.reward(s, a, state.t),
            terminal: is_terminal(&self.spec, state.t),
            clipped: mask.iter().any(|&m| m),
        })
    }

    fn reward(&self, s: &Vector, a: &Vector, t: usize) -> f64 {
        if t >= self.params.horizon {
            self.params.alpha2 * Hand::distance_term(s)
        } else {
            self.params.alpha1 * a.norm_squared()
        }
    }

    fn reward_derivatives(&self, s: &Vector, a: &Vector, t: usize) -> (Vector, Vector) {
        let mut r_s = Vector::zeros(8);
        let mut r_a = Vector::zeros(2);
        if t >= self.params.horizon {
            let a2 = self.params.alpha2;
            let hand = Vector::from_vec(vec![s[HAND], s[HAND + 1]]);
            let diff = Vector::from_vec(vec![s[BALL] - s[TARGET], s[BALL + 1] - s[TARGET + 1]]);
            let hn = hand.norm();
            let dn = diff.norm();
            for d in 0..2 {
                if hn > 0.0 {
                    r_s[HAND + d] = a2 * hand[d] / hn;
                }
                if dn > 0.0 {
                    r_s[BALL + d] = a2 * diff[d] / dn;
                    r_s[TARGET + d] = -a2 * diff[d] / dn;
                }
            }
        } else {
            r_a = a * (2.0 * self.params.alpha1);
        }
        (r_s, r_a)
    }

    fn true_derivatives(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<Derivatives> {
        check_step_inputs(&self.spec, state, a, xi)?;
        let p = &self.params;
        let (_, mask) = self.spec.clip_action(a);
        let dt = p.dt;
        let k_m = p.spring / p.mass;
        let mut f_s = Matrix::identity(8, 8);
        let mut f_a = Matrix::zeros(8, 2);
        for d in 0..2 {
            let (h, b, v) = (HAND + d, BALL + d, VEL + d);
            f_s[(v, h)] = dt * k_m;
            f_s[(v, b)] = -dt * k_m;
            f_s[(b, h)] = dt * dt * k_m;
            f_s[(b, b)] = 1.0 - dt * dt * k_m;
            f_s[(b, v)] = dt;
            f_a[(h, d)] = dt;
        }
        mask_clipped(&mut f_a, &mask);
        let (r_s, r_a) = self.reward_derivatives(&state.s, a, state.t);
        Ok(Derivatives { f_s, f_a, r_s, r_a })
    }

    fn is_differentiable(&self) -> bool {
        true
    }

    fn final_metric(&self, state: &EnvState) -> Option<f64> {
        Some(Hand::distance_term(&state.s))
    }
}
