//! Re-parameterized Gaussian policy `a = mu(s; theta) + exp(log_std) * eta`.
//!
//! The mean is a [`ScaledNetwork`] whose input map divides by the
//! environment's state scale and whose output map multiplies by its action
//! scale. The standard deviation is state independent. The flat parameter
//! vector `theta` is the mean-network parameters followed by `log_std`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::diffcore::{Affine, DiffNetwork, Manifest, ParamVector, ScaledNetwork, Tape};
use crate::envs::EnvSpec;
use crate::error::{check_dim, Error, Result};
use crate::rng::standard_normal;
use crate::{Matrix, Vector};

const CHECKPOINT_KIND: &str = "svgrad-policy";
const CHECKPOINT_VERSION: u32 = 1;

/// Behaviour statistics recorded when an action was taken.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySnapshot {
    pub mean: Vector,
    pub std: Vector,
}

impl PolicySnapshot {
    pub fn new(mean: Vector, std: Vector) -> Result<Self> {
        check_dim("PolicySnapshot", mean.len(), std.len())?;
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::NonFinite("policy snapshot std must be positive".into()));
        }
        Ok(PolicySnapshot { mean, std })
    }

    pub fn log_density(&self, a: &Vector) -> f64 {
        log_density(&self.mean, &self.std, a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReparamGaussianPolicy {
    mean_net: ScaledNetwork,
    log_std: Vector,
}

impl ReparamGaussianPolicy {
    pub fn new(mean_net: ScaledNetwork, log_std: Vector) -> Result<Self> {
        check_dim("ReparamGaussianPolicy log_std", mean_net.output_dim(), log_std.len())?;
        if log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy log_std".into()));
        }
        Ok(ReparamGaussianPolicy { mean_net, log_std })
    }

    /// Randomly initialized policy for `spec` with the given hidden sizes.
    ///
    /// The last layer is scaled by `last_layer_scale` so that initial
    /// actions stay close to zero; `init_std` is a fraction of the action scale.
    pub fn for_env<R: Rng + ?Sized>(
        spec: &EnvSpec,
        hidden: &[usize],
        init_std: f64,
        last_layer_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(init_std > 0.0) {
            return Err(Error::InvalidConfig(format!("policy init std must be > 0, got {init_std}")));
        }
        let mut sizes = vec![spec.state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(spec.action_dim);
        let mut net = DiffNetwork::random(&sizes, rng)?;
        let last = net.num_layers() - 1;
        *net.weights_mut(last) *= last_layer_scale;
        *net.bias_mut(last) *= last_layer_scale;
        let input = Affine::new(Vector::zeros(spec.state_dim), spec.state_scale.clone())?;
        let output = Affine::new(Vector::zeros(spec.action_dim), spec.action_scale.clone())?;
        let log_std = spec.action_scale.map(|s| (init_std * s).ln());
        Self::new(ScaledNetwork::new(net, input, output)?, log_std)
    }

    /// Linear policy `a = -gain * s + std * eta`.
    pub fn linear(gain: &Matrix, std: &Vector) -> Result<Self> {
        let net = DiffNetwork::from_layers(vec![-gain], vec![Vector::zeros(gain.nrows())])?;
        Self::new(ScaledNetwork::unscaled(net), std.map(f64::ln))
    }

    pub fn mean_net(&self) -> &ScaledNetwork {
        &self.mean_net
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn num_mean_params(&self) -> usize {
        self.mean_net.num_params()
    }

    pub fn num_params(&self) -> usize {
        self.num_mean_params() + self.action_dim()
    }

    pub fn log_std(&self) -> &Vector {
        &self.log_std
    }

    pub fn std(&self) -> Vector {
        self.log_std.map(f64::exp)
    }

    pub fn params(&self) -> ParamVector {
        let mut v = self.mean_net.params().into_vec();
        v.extend(self.log_std.iter());
        ParamVector::from_vec(v)
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        check_dim("ReparamGaussianPolicy::set_params", self.num_params(), p.len())?;
        if !p.is_finite() {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        let n = self.num_mean_params();
        self.mean_net
            .set_params(&ParamVector::from_vec(p.as_slice()[..n].to_vec()))?;
        self.log_std = Vector::from_column_slice(&p.as_slice()[n..]);
        Ok(())
    }

    /// Zeroes the `log_std` block of a parameter-space vector.
    pub fn freeze_std(&self, g: &mut ParamVector) {
        let n = self.num_mean_params();
        g.as_mut_slice()[n..].fill(0.0);
    }

    pub fn mean(&self, s: &Vector) -> Result<Vector> {
        check_dim("policy state", self.state_dim(), s.len())?;
        self.mean_net.forward(s)
    }

    pub fn snapshot(&self, s: &Vector) -> Result<PolicySnapshot> {
        Ok(PolicySnapshot {
            mean: self.mean(s)?,
            std: self.std(),
        })
    }

    pub fn act(&self, s: &Vector, eta: &Vector) -> Result<Vector> {
        check_dim("policy noise", self.action_dim(), eta.len())?;
        Ok(self.mean(s)? + self.std().component_mul(eta))
    }

    /// Draws `eta ~ N(0, I)` and returns `(action, eta)`.
    pub fn sample<R: Rng + ?Sized>(&self, s: &Vector, rng: &mut R) -> Result<(Vector, Vector)> {
        let eta = standard_normal(rng, self.action_dim());
        Ok((self.act(s, &eta)?, eta))
    }

    /// The noise that makes [`act`](Self::act) produce `a` at `s`.
    pub fn infer_noise(&self, s: &Vector, a: &Vector) -> Result<Vector> {
        check_dim("policy action", self.action_dim(), a.len())?;
        Ok((a - self.mean(s)?).component_div(&self.std()))
    }

    pub fn log_density_at(&self, s: &Vector, a: &Vector) -> Result<f64> {
        check_dim("policy action", self.action_dim(), a.len())?;
        Ok(log_density(&self.mean(s)?, &self.std(), a))
    }

    /// Records the forward pass at `(s, eta)` for later vector-Jacobian products.
    pub fn derivatives(&self, s: &Vector, eta: &Vector) -> Result<PolicyDerivatives<'_>> {
        check_dim("policy state", self.state_dim(), s.len())?;
        check_dim("policy noise", self.action_dim(), eta.len())?;
        Ok(PolicyDerivatives {
            policy: self,
            s: s.clone(),
            tape: self.mean_net.tape(s)?,
            std: self.std(),
            eta: eta.clone(),
        })
    }

    /// Score `d/d(theta) log pi(a | s)`.
    pub fn score(&self, s: &Vector, a: &Vector) -> Result<ParamVector> {
        let std = self.std();
        let z = (a - self.mean(s)?).component_div(&std);
        let mut out = vec![0.0; self.num_params()];
        let n = self.num_mean_params();
        let tape = self.mean_net.tape(s)?;
        self.mean_net
            .backward(&tape, &z.component_div(&std), Some((&mut out[..n], 1.0)))?;
        for i in 0..self.action_dim() {
            out[n + i] = z[i] * z[i] - 1.0;
        }
        Ok(ParamVector::from_vec(out))
    }

    /// Gradient over `theta` of `KL(pi_theta(.|s) || reference)`.
    pub fn kl_gradient(&self, s: &Vector, reference: &PolicySnapshot) -> Result<ParamVector> {
        check_dim("kl reference", self.action_dim(), reference.mean.len())?;
        let mean = self.mean(s)?;
        let std = self.std();
        let var_ref = reference.std.map(|v| v * v);
        let d_mean = (&mean - &reference.mean).component_div(&var_ref);
        let mut out = vec![0.0; self.num_params()];
        let n = self.num_mean_params();
        let tape = self.mean_net.tape(s)?;
        self.mean_net.backward(&tape, &d_mean, Some((&mut out[..n], 1.0)))?;
        for i in 0..self.action_dim() {
            out[n + i] = std[i] * std[i] / var_ref[i] - 1.0;
        }
        Ok(ParamVector::from_vec(out))
    }

    /// Diagonal of the Hessian over `theta` of `KL(pi_theta0(.|s) || pi_theta(.|s))`
    /// at `theta = theta0`.
    pub fn fisher_diagonal(&self, s: &Vector) -> Result<ParamVector> {
        check_dim("policy state", self.state_dim(), s.len())?;
        let std = self.std();
        let n = self.num_mean_params();
        let tape = self.mean_net.tape(s)?;
        let mut out = vec![0.0; self.num_params()];
        let mut row = vec![0.0; n];
        for j in 0..self.action_dim() {
            row.fill(0.0);
            let mut e = Vector::zeros(self.action_dim());
            e[j] = 1.0;
            self.mean_net.backward(&tape, &e, Some((&mut row[..], 1.0)))?;
            let w = 1.0 / (std[j] * std[j]);
            for (o, g) in out[..n].iter_mut().zip(&row) {
                *o += w * g * g;
            }
            out[n + j] = 2.0;
        }
        Ok(ParamVector::from_vec(out))
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut m = Manifest::new();
        m.push("layers", self.mean_net.net().layer_sizes().iter());
        m.push("action_dim", [self.action_dim()]);
        m.push_vector("input_shift", &self.mean_net.input_affine().shift);
        m.push_vector("input_scale", &self.mean_net.input_affine().scale);
        m.push_vector("output_shift", &self.mean_net.output_affine().shift);
        m.push_vector("output_scale", &self.mean_net.output_affine().scale);
        m.write_to(w, CHECKPOINT_KIND, CHECKPOINT_VERSION)?;
        self.params().write_to(w)
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let m = Manifest::read_from(r, CHECKPOINT_KIND, CHECKPOINT_VERSION)?;
        let layers = m.usizes("layers")?;
        let input = Affine::new(m.vector("input_shift")?, m.vector("input_scale")?)?;
        let output = Affine::new(m.vector("output_shift")?, m.vector("output_scale")?)?;
        let net = ScaledNetwork::new(DiffNetwork::zeros(&layers)?, input, output)?;
        check_dim("policy checkpoint action_dim", net.output_dim(), m.usize("action_dim")?)?;
        let n_a = net.output_dim();
        let mut policy = Self::new(net, Vector::zeros(n_a))?;
        policy.set_params(&ParamVector::read_from(r)?)?;
        Ok(policy)
    }
}

/// Forward pass of the policy at a fixed `(s, eta)`, exposing `pi_s` and
/// vector-Jacobian products with `pi_theta`.
pub struct PolicyDerivatives<'a> {
    policy: &'a ReparamGaussianPolicy,
    s: Vector,
    tape: Tape,
    std: Vector,
    eta: Vector,
}

impl PolicyDerivatives<'_> {
    pub fn action(&self) -> Vector {
        self.policy.mean_net.tape_output(&self.tape) + self.std.component_mul(&self.eta)
    }

    /// `pi_s = d(mu)/d(s)`; the noise term does not depend on the state.
    pub fn pi_s(&self) -> Result<Matrix> {
        self.policy.mean_net.input_jacobian(&self.s)
    }

    /// Adds `scale * cot^T pi_theta` into `acc` and returns `cot^T pi_s`.
    pub fn backward(&self, cot: &Vector, acc: &mut [f64], scale: f64) -> Result<Vector> {
        check_dim("policy cotangent", self.policy.action_dim(), cot.len())?;
        check_dim("policy accumulator", self.policy.num_params(), acc.len())?;
        let n = self.policy.num_mean_params();
        let ds = self
            .policy
            .mean_net
            .backward(&self.tape, cot, Some((&mut acc[..n], scale)))?;
        for i in 0..cot.len() {
            acc[n + i] += scale * cot[i] * self.std[i] * self.eta[i];
        }
        Ok(ds)
    }

    /// `cot^T pi_theta` as a fresh parameter vector.
    pub fn theta_vjp(&self, cot: &Vector) -> Result<ParamVector> {
        let mut out = vec![0.0; self.policy.num_params()];
        self.backward(cot, &mut out, 1.0)?;
        Ok(ParamVector::from_vec(out))
    }
}

/// Log density of the diagonal Gaussian `N(mean, diag(std^2))` at `a`.
pub fn log_density(mean: &Vector, std: &Vector, a: &Vector) -> f64 {
    let mut out = 0.0;
    for i in 0..a.len() {
        let z = (a[i] - mean[i]) / std[i];
        out += -0.5 * (2.0 * PI).ln() - std[i].ln() - 0.5 * z * z;
    }
    out
}

/// `KL(N(mean0, std0^2) || N(mean1, std1^2))` for diagonal Gaussians.
pub fn kl_divergence(mean0: &Vector, std0: &Vector, mean1: &Vector, std1: &Vector) -> f64 {
    let mut out = 0.0;
    for i in 0..mean0.len() {
        let ratio = std0[i] / std1[i];
        let d = (mean0[i] - mean1[i]) / std1[i];
        out += -ratio.ln() + 0.5 * (ratio * ratio + d * d) - 0.5;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{central_difference, fd_check, relative_error, FD_STEP};
    use crate::envs::{make_env, Environment};
    use crate::rng::{stream, Stream};
    use nalgebra::dvector;
    use std::collections::BTreeMap;

    fn cartpole() -> Box<dyn Environment> {
        make_env("cartpole", &BTreeMap::new()).unwrap()
    }

    fn random_policy(seed: u64) -> ReparamGaussianPolicy {
        let mut rng = stream(seed, Stream::Init);
        let env = make_env("hand", &BTreeMap::new()).unwrap();
        let mut p = ReparamGaussianPolicy::for_env(env.spec(), &[6, 5], 0.3, 1.0, &mut rng).unwrap();
        let mut theta = p.params();
        let n = p.num_mean_params();
        theta.as_mut_slice()[n] = -0.4;
        theta.as_mut_slice()[n + 1] = 0.2;
        p.set_params(&theta).unwrap();
        p
    }

    fn state(seed: u64, dim: usize) -> Vector {
        standard_normal(&mut stream(seed, Stream::Env), dim)
    }

    #[test]
    fn act_trivial_cases() {
        let p = random_policy(1);
        let s = state(1, 8);
        assert_eq!(p.act(&s, &Vector::zeros(2)).unwrap(), p.mean(&s).unwrap());
        let zero = ReparamGaussianPolicy::new(ScaledNetwork::zeros(&[3, 2]).unwrap(), Vector::zeros(2)).unwrap();
        let eta = dvector![0.3, -1.7];
        assert_eq!(zero.act(&dvector![1.0, 2.0, 3.0], &eta).unwrap(), eta);
    }

    #[test]
    fn action_moments() {
        let p = random_policy(2);
        let s = state(2, 8);
        let mut rng = stream(2, Stream::PolicyNoise);
        let n = 100_000;
        let mut sum = Vector::zeros(2);
        let mut sq = Vector::zeros(2);
        for _ in 0..n {
            let (a, _) = p.sample(&s, &mut rng).unwrap();
            sum += &a;
            sq += a.component_mul(&a);
        }
        let mean = &sum / n as f64;
        let var = &sq / n as f64 - mean.component_mul(&mean);
        let mu = p.mean(&s).unwrap();
        let std = p.std();
        for i in 0..2 {
            assert!((mean[i] - mu[i]).abs() <= 0.01 * std[i].max(mu[i].abs()), "mean {i}");
            assert!((var[i].sqrt() - std[i]).abs() <= 0.01 * std[i], "std {i}");
        }
    }

    #[test]
    fn log_density_cases() {
        let m = dvector![0.0];
        assert!((log_density(&m, &dvector![1.0], &m) + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        let m2 = dvector![0.3, -1.0];
        let a = log_density(&m2, &dvector![0.5, 2.0], &m2);
        let b = log_density(&m2, &dvector![1.0, 4.0], &m2);
        assert!((a - b - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        // Composite Simpson rule over +-12 standard deviations.
        let (mu, sd) = (0.7, 0.4);
        let n = 20_000;
        let (lo, hi) = (mu - 12.0 * sd, mu + 12.0 * sd);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| log_density(&dvector![mu], &dvector![sd], &dvector![x]).exp();
        let mut total = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            total += w * f(lo + i as f64 * h);
        }
        assert!((total * h / 3.0 - 1.0).abs() < 1e-8);

        // Probability mass of [mu, mu + sd] against the error function value.
        let n = 2000;
        let h = sd / n as f64;
        let mut mass = f(mu) + f(mu + sd);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            mass += w * f(mu + i as f64 * h);
        }
        assert!((mass * h / 3.0 - 0.341_344_746_068_542_9).abs() < 1e-8);
    }

    #[test]
    fn noise_inference_round_trip() {
        let p = random_policy(3);
        let s = state(3, 8);
        let mu = p.mean(&s).unwrap();
        assert!(p.infer_noise(&s, &mu).unwrap().amax() < 1e-15);
        let mut rng = stream(3, Stream::PolicyNoise);
        for _ in 0..100 {
            let (a, eta) = p.sample(&s, &mut rng).unwrap();
            let back = p.infer_noise(&s, &a).unwrap();
            assert!((&back - &eta).amax() < 1e-12);
            assert!((p.act(&s, &back).unwrap() - &a).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_has_no_log_std_gradient() {
        let p = random_policy(4);
        let d = p.derivatives(&state(4, 8), &Vector::zeros(2)).unwrap();
        let g = d.theta_vjp(&dvector![1.3, -0.2]).unwrap();
        let n = p.num_mean_params();
        assert_eq!(&g.as_slice()[n..], &[0.0, 0.0]);
    }

    #[test]
    fn linear_policy_pi_s_is_weight() {
        let gain = Matrix::from_row_slice(1, 2, &[0.4, -1.2]);
        let p = ReparamGaussianPolicy::linear(&gain, &dvector![0.5]).unwrap();
        let d = p.derivatives(&dvector![3.0, 1.0], &dvector![0.2]).unwrap();
        assert_eq!(d.pi_s().unwrap(), -gain);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for seed in 0..20 {
            let p = random_policy(seed);
            let s = state(seed + 100, 8);
            let eta = state(seed + 200, 2);
            let cot = state(seed + 300, 2);
            let d = p.derivatives(&s, &eta).unwrap();
            assert!((d.action() - p.act(&s, &eta).unwrap()).amax() < 1e-14);

            let analytic = d.theta_vjp(&cot).unwrap();
            let mut probe = p.clone();
            let f = |theta: &ParamVector| {
                probe.set_params(theta).unwrap();
                probe.act(&s, &eta).unwrap().dot(&cot)
            };
            assert!(fd_check(f, &p.params(), &analytic, 1e-5).passed);

            let pi_s = d.pi_s().unwrap();
            let f = |x: &ParamVector| p.act(&Vector::from_column_slice(x.as_slice()), &eta).unwrap().dot(&cot);
            let fd = central_difference(f, &ParamVector::from_vec(s.as_slice().to_vec()), FD_STEP);
            let via = ParamVector::from_vec(pi_s.tr_mul(&cot).as_slice().to_vec());
            assert!(relative_error(&via, &fd) <= 1e-5);
            let mut acc = vec![0.0; p.num_params()];
            let ds = d.backward(&cot, &mut acc, 1.0).unwrap();
            assert!((ds - pi_s.tr_mul(&cot)).amax() < 1e-12);
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let p = random_policy(5);
        let s = state(5, 8);
        let a = dvector![0.4, -0.9];
        let analytic = p.score(&s, &a).unwrap();
        let mut probe = p.clone();
        let f = |theta: &ParamVector| {
            probe.set_params(theta).unwrap();
            probe.log_density_at(&s, &a).unwrap()
        };
        assert!(fd_check(f, &p.params(), &analytic, 1e-5).passed);
        let mu = p.mean(&s).unwrap();
        let at_mode = p.score(&s, &mu).unwrap();
        assert!(at_mode.as_slice()[..p.num_mean_params()].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kl_cases() {
        let m = dvector![0.2, -0.3];
        let sd = dvector![0.5, 2.0];
        assert_eq!(kl_divergence(&m, &sd, &m, &sd), 0.0);
        let one = dvector![1.0, 1.0];
        let delta = dvector![0.3, -1.1];
        let k = kl_divergence(&m, &one, &(&m + &delta), &one);
        assert!((k - delta.norm_squared() / 2.0).abs() < 1e-14);
        assert!(kl_divergence(&m, &sd, &m, &one) > 0.0);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let (m0, s0) = (dvector![0.2, -0.3], dvector![0.5, 1.4]);
        let (m1, s1) = (dvector![-0.1, 0.4], dvector![0.8, 1.0]);
        let mut rng = stream(6, Stream::PolicyNoise);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let a = &m0 + s0.component_mul(&standard_normal(&mut rng, 2));
            let x = log_density(&m0, &s0, &a) - log_density(&m1, &s1, &a);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - kl_divergence(&m0, &s0, &m1, &s1)).abs() < 3.0 * se);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let p = random_policy(7);
        let s = state(7, 8);
        let reference = PolicySnapshot::new(dvector![0.1, -0.2], dvector![0.6, 1.5]).unwrap();
        let analytic = p.kl_gradient(&s, &reference).unwrap();
        let mut probe = p.clone();
        let f = |theta: &ParamVector| {
            probe.set_params(theta).unwrap();
            let snap = probe.snapshot(&s).unwrap();
            kl_divergence(&snap.mean, &snap.std, &reference.mean, &reference.std)
        };
        assert!(fd_check(f, &p.params(), &analytic, 1e-5).passed);
    }

    #[test]
    fn fisher_diagonal_is_kl_curvature() {
        let p = random_policy(9);
        let s = state(9, 8);
        let anchor = p.snapshot(&s).unwrap();
        let diag = p.fisher_diagonal(&s).unwrap();
        let theta = p.params();
        let mut probe = p.clone();
        let h = 1e-4;
        let n = theta.len();
        for i in (0..n).step_by(7).chain([n - 2, n - 1]) {
            let mut kl_at = |d: f64| {
                let mut q = theta.clone();
                q.as_mut_slice()[i] += d;
                probe.set_params(&q).unwrap();
                let snap = probe.snapshot(&s).unwrap();
                kl_divergence(&anchor.mean, &anchor.std, &snap.mean, &snap.std)
            };
            let second = (kl_at(h) + kl_at(-h)) / (h * h);
            assert!((second - diag.as_slice()[i]).abs() <= 1e-4 * diag.as_slice()[i].max(1.0), "{i}");
        }
    }

    #[test]
    fn pathwise_and_likelihood_ratio_gradients_agree() {
        // E[g(a)] with g(a) = -|a - c|^2 at a fixed state, over theta.
        let p = random_policy(8);
        let s = state(8, 8);
        let c = dvector![0.5, -0.25];
        let mut rng = stream(8, Stream::PolicyNoise);
        let n = 100_000;
        let dim = p.num_params();
        let mut stats = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
        for _ in 0..n {
            let (a, eta) = p.sample(&s, &mut rng).unwrap();
            let diff = &a - &c;
            let g = -diff.norm_squared();
            let path = p.derivatives(&s, &eta).unwrap().theta_vjp(&(-2.0 * &diff)).unwrap();
            let lr = p.score(&s, &a).unwrap().scaled(g);
            for i in 0..dim {
                stats[0][i] += path.as_slice()[i];
                stats[1][i] += path.as_slice()[i].powi(2);
                stats[2][i] += lr.as_slice()[i];
                stats[3][i] += lr.as_slice()[i].powi(2);
            }
        }
        let nf = n as f64;
        for i in 0..dim {
            let m0 = stats[0][i] / nf;
            let m1 = stats[2][i] / nf;
            let v0 = (stats[1][i] / nf - m0 * m0) / nf;
            let v1 = (stats[3][i] / nf - m1 * m1) / nf;
            let se = (v0 + v1).sqrt();
            assert!((m0 - m1).abs() <= 3.0 * se + 1e-12, "param {i}: {m0} vs {m1} (se {se})");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let env = cartpole();
        let p = ReparamGaussianPolicy::for_env(env.spec(), &[5, 4], 0.1, 0.1, &mut stream(9, Stream::Init)).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        assert!(buf.starts_with(b"svgrad-policy 1\n"));
        let back = ReparamGaussianPolicy::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }
}
