use rand::Rng;

use crate::diffcore::{Direction, Optimizer, ParamVector};
use crate::dynmodel::DynamicsModel;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::policy::ReparamGaussianPolicy;
use crate::replay::ExperienceDatabase;

use super::clip_gradient;
use super::estimators::{svg1_gradient, StateValueGradient};

#[derive(Clone, Debug, PartialEq)]
pub struct ReplaySettings {
    /// Number of replay steps `K`.
    pub steps: usize,
    pub batch_size: usize,
    /// Weight `beta` of the KL penalty; 0 disables it.
    pub beta: f64,
    pub w_max: f64,
    pub v_max: f64,
    /// When false the log-std block of every step is zeroed.
    pub learn_std: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    /// Mean over steps of the step norm before and after clipping.
    pub grad_norm_pre: f64,
    pub grad_norm_post: f64,
    pub mean_weight: f64,
    /// Euclidean distance between the parameters before and after the update.
    pub displacement: f64,
    /// Reason the remaining steps were skipped, if any.
    pub aborted: Option<String>,
}

/// `K` SVG(1) steps on fresh database batches with a KL penalty to the previous iterate.
///
/// Each step maximizes the linearized objective `g^T d` minus
/// `beta * E_s KL(pi_prev || pi_{theta + d})` minus the optimizer's proximal
/// term `|d|^2 / (2 alpha)`. With the KL replaced by its diagonal
/// second-order expansion this gives `d_i = g_i / (1 + alpha * beta * F_ii)`
/// where `F` is the Fisher diagonal averaged over the batch states. The
/// direction is then clipped to `v_max` and handed to the optimizer.
/// `beta = 0` reduces to clipped SVG(1) steps.
#[allow(clippy::too_many_arguments)]
pub fn kl_regularized_replay_update<R: Rng + ?Sized>(
    policy: &mut ReparamGaussianPolicy,
    db: &ExperienceDatabase,
    model: &DynamicsModel,
    critic: &dyn StateValueGradient,
    env: &dyn Environment,
    settings: &ReplaySettings,
    opt: &mut Optimizer,
    rng: &mut R,
) -> Result<ReplayReport> {
    if !(settings.beta >= 0.0) {
        return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", settings.beta)));
    }
    let start = policy.params();
    let mut report = ReplayReport::default();
    if settings.steps == 0 {
        return Ok(report);
    }
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut weight_sum = 0.0;
    let mut weight_count = 0usize;
    for k in 0..settings.steps {
        let batch = db.sample(settings.batch_size.max(1), rng)?;
        let step = (|| -> Result<(ParamVector, f64)> {
            let mut g = ParamVector::zeros(policy.num_params());
            let mut w = 0.0;
            for tr in &batch {
                let sample = svg1_gradient(tr, model, policy, critic, env, settings.w_max)?;
                g.add_scaled(1.0, &sample.gradient);
                w += sample.weight;
            }
            let n = batch.len() as f64;
            g.scale(1.0 / n);
            if settings.beta > 0.0 {
                let mut fisher = ParamVector::zeros(policy.num_params());
                for tr in &batch {
                    fisher.add_scaled(1.0 / n, &policy.fisher_diagonal(&tr.s)?);
                }
                let damping = opt.step_size() * settings.beta;
                for (gi, fi) in g.as_mut_slice().iter_mut().zip(fisher.as_slice()) {
                    *gi /= 1.0 + damping * fi;
                }
            }
            if !settings.learn_std {
                policy.freeze_std(&mut g);
            }
            Ok((g, w))
        })();
        let (g, w) = match step {
            Ok(v) if v.0.is_finite() => v,
            Ok(_) => {
                report.aborted = Some(format!("non-finite replay gradient at step {k}"));
                break;
            }
            Err(e) => {
                report.aborted = Some(format!("replay step {k}: {e}"));
                break;
            }
        };
        let clipped = clip_gradient(&g, settings.v_max)?;
        let mut theta = policy.params();
        opt.apply(&mut theta, &clipped, Direction::Ascent)?;
        if !theta.is_finite() {
            report.aborted = Some(format!("non-finite parameters after replay step {k}"));
            break;
        }
        policy.set_params(&theta)?;
        report.steps += 1;
        report.grad_norm_pre += g.norm();
        report.grad_norm_post += clipped.norm();
        weight_sum += w;
        weight_count += batch.len();
    }
    if report.steps > 0 {
        report.grad_norm_pre /= report.steps as f64;
        report.grad_norm_post /= report.steps as f64;
    }
    if weight_count > 0 {
        report.mean_weight = weight_sum / weight_count as f64;
    }
    let mut delta = policy.params();
    delta.add_scaled(-1.0, &start);
    report.displacement = delta.norm();
    Ok(report)
}
