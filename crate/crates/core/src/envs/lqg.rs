use std::collections::BTreeMap;

use rand::RngCore;

use super::{
    apply_overrides, check_step_inputs, mask_clipped, Derivatives, EnvSpec, EnvState, Environment,
    StepResult,
};
use crate::error::{check_dim, Error, Result};
use crate::rng::standard_normal;
use crate::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct LqgParams {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    /// Standard deviation of the isotropic additive state noise.
    pub noise_std: f64,
    pub gamma: f64,
    /// Standard deviation of the isotropic Gaussian initial state.
    pub init_std: f64,
    pub action_bound: f64,
}

impl Default for LqgParams {
    fn default() -> Self {
        LqgParams {
            a: Matrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.9]),
            b: Matrix::from_row_slice(2, 1, &[0.0, 0.5]),
            q: Matrix::identity(2, 2),
            r: Matrix::from_element(1, 1, 0.5),
            noise_std: 0.3,
            gamma: 0.98,
            init_std: 1.0,
            action_bound: f64::INFINITY,
        }
    }
}

impl LqgParams {
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        apply_overrides(
            "lqg",
            overrides,
            &mut [
                ("noise_std", &mut self.noise_std),
                ("gamma", &mut self.gamma),
                ("init_std", &mut self.init_std),
                ("action_bound", &mut self.action_bound),
            ],
        )?;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Linear dynamics `s' = A s + B a + noise_std * xi`, reward `-(s'Qs + a'Ra)`,
/// infinite horizon.
#[derive(Clone, Debug)]
pub struct Lqg {
    params: LqgParams,
    spec: EnvSpec,
}

impl Lqg {
    pub fn new(params: LqgParams) -> Result<Self> {
        let n = params.state_dim();
        let m = params.action_dim();
        check_dim("Lqg A", n, params.a.ncols())?;
        check_dim("Lqg B", n, params.b.nrows())?;
        check_dim("Lqg Q", n, params.q.nrows())?;
        check_dim("Lqg R", m, params.r.nrows())?;
        if params.noise_std < 0.0 || params.init_std < 0.0 || !(params.action_bound > 0.0) {
            return Err(Error::InvalidConfig("lqg noise/init std must be >= 0 and bound > 0".into()));
        }
        let spec = EnvSpec {
            id: "lqg".into(),
            state_dim: n,
            action_dim: m,
            noise_dim: n,
            horizon: None,
            gamma: params.gamma,
            action_low: Vector::from_element(m, -params.action_bound),
            action_high: Vector::from_element(m, params.action_bound),
            state_scale: Vector::from_element(n, params.init_std.max(1e-3)),
            action_scale: Vector::from_element(m, 1.0),
        };
        spec.validate()?;
        Ok(Lqg { params, spec })
    }

    pub fn params(&self) -> &LqgParams {
        &self.params
    }

    /// Optimal feedback gain `K` (action `-K s`) and cost matrix `P`.
    pub fn optimal(&self) -> Result<(Matrix, Matrix)> {
        let p = &self.params;
        discounted_lqr(&p.a, &p.b, &p.q, &p.r, p.gamma)
    }

    /// Value of the linear-Gaussian policy `a = -K s + diag(policy_std) eta`.
    pub fn policy_value(&self, gain: &Matrix, policy_std: &Vector) -> Result<LinearPolicyValue> {
        LinearPolicyValue::evaluate(&self.params, gain, policy_std)
    }

    /// Value of the optimal deterministic policy.
    pub fn optimal_value(&self) -> Result<LinearPolicyValue> {
        let (_, k) = self.optimal()?;
        self.policy_value(&k, &Vector::zeros(self.params.action_dim()))
    }
}

/// Solves the discounted Riccati equation
/// `P = Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA` by fixed-point iteration.
/// Returns `(P, K)` with `K = g (R + g B'PB)^-1 B'PA`.
pub fn discounted_lqr(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, gamma: f64) -> Result<(Matrix, Matrix)> {
    let mut p = q.clone();
    for _ in 0..100_000 {
        let gain = riccati_gain(a, b, &p, r, gamma)?;
        let next = q + gamma * a.transpose() * &p * a - gamma * a.transpose() * &p * b * &gain;
        let next = 0.5 * (&next + next.transpose());
        let diff = (&next - &p).amax();
        p = next;
        if diff <= 1e-13 * p.amax().max(1.0) {
            let k = riccati_gain(a, b, &p, r, gamma)?;
            return Ok((p, k));
        }
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::Diverged("discounted Riccati iteration did not converge".into()))
}

fn riccati_gain(a: &Matrix, b: &Matrix, p: &Matrix, r: &Matrix, gamma: f64) -> Result<Matrix> {
    let lhs = r + gamma * b.transpose() * p * b;
    let rhs = gamma * b.transpose() * p * a;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Diverged("singular matrix in Riccati gain".into()))
}

/// `V(s) = -(s'Ps + c)` for a linear-Gaussian policy on an [`Lqg`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicyValue {
    pub p: Matrix,
    pub c: f64,
    pub gain: Matrix,
    pub policy_std: Vector,
    params: LqgParams,
}

impl LinearPolicyValue {
    /// Solves `P = Q + K'RK + g (A-BK)' P (A-BK)` and
    /// `c = (tr(R S) + g tr(P (s^2 I + B S B'))) / (1 - g)` with `S = diag(policy_std^2)`.
    pub fn evaluate(params: &LqgParams, gain: &Matrix, policy_std: &Vector) -> Result<Self> {
        let n = params.state_dim();
        check_dim("LinearPolicyValue gain rows", params.action_dim(), gain.nrows())?;
        check_dim("LinearPolicyValue gain cols", n, gain.ncols())?;
        let g = params.gamma;
        let closed = &params.a - &params.b * gain;
        let cost = &params.q + gain.transpose() * &params.r * gain;
        let mut p = cost.clone();
        let mut converged = false;
        for _ in 0..200_000 {
            let next = &cost + g * closed.transpose() * &p * &closed;
            let diff = (&next - &p).amax();
            p = next;
            if !p.iter().all(|v| v.is_finite()) {
                break;
            }
            if diff <= 1e-13 * p.amax().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Diverged("policy evaluation diverged (unstable closed loop)".into()));
        }
        let s_pi = Matrix::from_diagonal(&policy_std.map(|v| v * v));
        let noise = Matrix::identity(n, n) * params.noise_std.powi(2) + &params.b * &s_pi * params.b.transpose();
        let c = ((&params.r * &s_pi).trace() + g * (&p * noise).trace()) / (1.0 - g);
        Ok(LinearPolicyValue {
            p,
            c,
            gain: gain.clone(),
            policy_std: policy_std.clone(),
            params: params.clone(),
        })
    }

    pub fn value(&self, s: &Vector) -> f64 {
        -(s.dot(&(&self.p * s)) + self.c)
    }

    pub fn value_gradient(&self, s: &Vector) -> Vector {
        -(&self.p + self.p.transpose()) * s
    }

    /// `Q(s, a) = r(s, a) + g E V(A s + B a + noise)`.
    pub fn q_value(&self, s: &Vector, a: &Vector) -> f64 {
        let pr = &self.params;
        let mean = &pr.a * s + &pr.b * a;
        let reward = -(s.dot(&(&pr.q * s)) + a.dot(&(&pr.r * a)));
        let noise = pr.noise_std.powi(2) * self.p.trace();
        reward + pr.gamma * (self.value(&mean) - noise)
    }

    /// Expected discounted return from the initial-state distribution.
    pub fn expected_return(&self) -> f64 {
        -(self.params.init_std.powi(2) * self.p.trace() + self.c)
    }
}

impl Environment for Lqg {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut dyn RngCore) -> EnvState {
        let s = standard_normal(rng, self.params.state_dim()) * self.params.init_std;
        EnvState::new(s, 0)
    }

    fn step_reparam(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<StepResult> {
        check_step_inputs(&self.spec, state, a, xi)?;
        let (ac, mask) = self.spec.clip_action(a);
        let p = &self.params;
        let next = &p.a * &state.s + &p.b * ac + xi * p.noise_std;
        Ok(StepResult {
            next_state: next,
            reward: self.reward(&state.s, a, state.t),
            terminal: false,
            clipped: mask.iter().any(|&m| m),
        })
    }

    fn reward(&self, s: &Vector, a: &Vector, _t: usize) -> f64 {
        -(s.dot(&(&self.params.q * s)) + a.dot(&(&self.params.r * a)))
    }

    fn reward_derivatives(&self, s: &Vector, a: &Vector, _t: usize) -> (Vector, Vector) {
        let q = &self.params.q;
        let r = &self.params.r;
        (-(q + q.transpose()) * s, -(r + r.transpose()) * a)
    }

    fn true_derivatives(&self, state: &EnvState, a: &Vector, xi: &Vector) -> Result<Derivatives> {
        check_step_inputs(&self.spec, state, a, xi)?;
        let (_, mask) = self.spec.clip_action(a);
        let mut f_a = self.params.b.clone();
        mask_clipped(&mut f_a, &mask);
        let (r_s, r_a) = self.reward_derivatives(&state.s, a, state.t);
        Ok(Derivatives {
            f_s: self.params.a.clone(),
            f_a,
            r_s,
            r_a,
        })
    }

    fn is_differentiable(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::testutil::derivative_error;
    use crate::rng::{stream, Stream};
    use nalgebra::dvector;

    fn env() -> Lqg {
        Lqg::new(LqgParams::default()).unwrap()
    }

    #[test]
    fn noiseless_step_is_linear() {
        let e = Lqg::new(LqgParams { noise_std: 0.0, ..LqgParams::default() }).unwrap();
        let s = dvector![1.0, -2.0];
        let a = dvector![0.7];
        let xi = dvector![3.0, -1.0];
        let r = e.step_reparam(&EnvState::new(s.clone(), 0), &a, &xi).unwrap();
        let p = e.params();
        assert_eq!(r.next_state, &p.a * &s + &p.b * &a);
        assert!(!r.terminal);
    }

    #[test]
    fn reset_mean_is_zero() {
        let e = env();
        let mut rng = stream(2, Stream::Env);
        let n = 100_000;
        let mut mean = Vector::zeros(2);
        for _ in 0..n {
            mean += e.reset(&mut rng).s;
        }
        mean /= n as f64;
        assert!(mean.amax() < 0.02, "{mean}");
    }

    #[test]
    fn true_derivatives_are_a_and_b() {
        let e = env();
        let d = e
            .true_derivatives(&EnvState::new(dvector![0.3, 4.0], 7), &dvector![-2.0], &dvector![0.1, 0.2])
            .unwrap();
        assert_eq!(d.f_s, e.params().a);
        assert_eq!(d.f_a, e.params().b);
        assert!(derivative_error(&e, &EnvState::new(dvector![0.3, 4.0], 7), &dvector![-2.0], &dvector![0.1, 0.2]) < 1e-6);
    }

    #[test]
    fn riccati_fixed_point_and_optimality() {
        let e = env();
        let p = e.params();
        let (pm, k) = e.optimal().unwrap();
        let g = p.gamma;
        let residual = &p.q + g * p.a.transpose() * &pm * &p.a
            - g * g * p.a.transpose() * &pm * &p.b
                * (&p.r + g * p.b.transpose() * &pm * &p.b).try_inverse().unwrap()
                * p.b.transpose() * &pm * &p.a
            - &pm;
        assert!(residual.amax() < 1e-9);
        // the optimal gain beats perturbed gains
        let best = e.policy_value(&k, &Vector::zeros(1)).unwrap().expected_return();
        for dk in [dvector![0.05, 0.0], dvector![0.0, -0.05], dvector![-0.1, 0.1]] {
            let kk = &k + Matrix::from_row_slice(1, 2, dk.as_slice());
            assert!(e.policy_value(&kk, &Vector::zeros(1)).unwrap().expected_return() < best);
        }
        // P of the optimal policy evaluation equals the Riccati P
        let v = e.optimal_value().unwrap();
        assert!((v.p - pm).amax() < 1e-8);
    }

    #[test]
    fn q_value_consistent_with_value() {
        // V(s) = E_a Q(s, a) for a deterministic policy: V(s) = Q(s, -Ks)
        let e = env();
        let v = e.optimal_value().unwrap();
        let s = dvector![0.4, -1.2];
        let a = -&v.gain * &s;
        assert!((v.value(&s) - v.q_value(&s, &a)).abs() < 1e-8);
    }

    #[test]
    fn unstable_gain_reported() {
        let e = env();
        let k = Matrix::from_row_slice(1, 2, &[0.0, -5.0]);
        assert!(e.policy_value(&k, &Vector::zeros(1)).is_err());
    }
}
