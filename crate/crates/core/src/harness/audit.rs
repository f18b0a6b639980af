use crate::diffcore::{central_difference, relative_error, ParamVector, FD_STEP};
use crate::envs::Environment;
use crate::error::Result;
use crate::policy::ReparamGaussianPolicy;
use crate::rng::{standard_normal, substream, Stream};
use crate::svg::{rollout_with_noises, svg_inf_gradient, TrueDynamics};
use crate::Vector;

#[derive(Clone, Debug, PartialEq)]
pub struct AuditLine {
    pub env: String,
    pub steps: usize,
    pub seed: u64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub tolerance: f64,
    pub lines: Vec<AuditLine>,
}

impl AuditReport {
    pub fn worst(&self) -> f64 {
        self.lines.iter().map(|l| l.rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.rel_error <= self.tolerance)
    }
}

/// A policy with random parameters of moderate size, so that every block of
/// the gradient is exercised.
pub fn audit_policy(env: &dyn Environment, hidden: &[usize], seed: u64) -> Result<ReparamGaussianPolicy> {
    let mut rng = substream(seed, Stream::Init, 0);
    let mut p = ReparamGaussianPolicy::for_env(env.spec(), hidden, 0.3, 1.0, &mut rng)?;
    let n = p.num_mean_params();
    let mut theta = p.params();
    let noise = standard_normal(&mut rng, theta.len());
    for (i, v) in theta.as_mut_slice().iter_mut().enumerate() {
        *v += if i < n { 0.3 * noise[i] } else { 0.1 * noise[i] };
    }
    p.set_params(&theta)?;
    Ok(p)
}

/// Compares [`svg_inf_gradient`] with the environment's true derivatives
/// against central differences of the frozen-noise return, over all policy
/// parameters, for every trace length in `steps` and `seeds` seeds.
pub fn gradient_audit(
    env: &dyn Environment,
    hidden: &[usize],
    steps: std::ops::RangeInclusive<usize>,
    seeds: u64,
    tolerance: f64,
) -> Result<AuditReport> {
    let gamma = env.spec().gamma;
    let dynamics = TrueDynamics(env);
    let mut lines = Vec::new();
    for n in steps {
        for seed in 0..seeds {
            let policy = audit_policy(env, hidden, seed)?;
            let mut rng = substream(seed, Stream::Env, n as u64);
            let start = env.reset(&mut rng);
            let etas: Vec<Vector> = (0..n).map(|_| standard_normal(&mut rng, policy.action_dim())).collect();
            let xis: Vec<Vector> = (0..n).map(|_| standard_normal(&mut rng, env.spec().noise_dim)).collect();
            let trace = rollout_with_noises(&dynamics, &policy, env, &start, &etas, &xis)?;
            let analytic = svg_inf_gradient(&trace, &dynamics, &policy, env, gamma)?;
            let mut probe = policy.clone();
            let mut failure = None;
            let numeric = central_difference(
                |theta: &ParamVector| {
                    let run = probe
                        .set_params(theta)
                        .and_then(|_| rollout_with_noises(&dynamics, &probe, env, &start, &etas, &xis));
                    match run {
                        Ok(tr) => tr.discounted_return(gamma),
                        Err(e) => {
                            failure.get_or_insert(e);
                            f64::NAN
                        }
                    }
                },
                &policy.params(),
                FD_STEP,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            lines.push(AuditLine {
                env: env.spec().id.clone(),
                steps: n,
                seed,
                rel_error: relative_error(&analytic, &numeric),
            });
        }
    }
    Ok(AuditReport { tolerance, lines })
}
