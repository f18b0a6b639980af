use crate::envs::{EnvState, Environment};
use crate::error::{Error, Result};
use crate::policy::ReparamGaussianPolicy;
use crate::rng::{substream, Stream};
use crate::Vector;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// Mean discounted return (plain sum when `gamma = 1`).
    pub mean_return: f64,
    /// Mean of the environment's final metric at the last visited state.
    pub mean_final_metric: Option<f64>,
    pub returns: Vec<f64>,
}

/// Runs `episodes` rollouts of at most `max_steps` steps.
///
/// Actions are the policy mean unless `stochastic`. Rollout `i` draws its
/// initial state and noises from its own stream of `seed`, so results do not
/// depend on anything else consumed by the caller.
pub fn evaluate_policy(
    policy: &ReparamGaussianPolicy,
    env: &dyn Environment,
    episodes: usize,
    max_steps: usize,
    stochastic: bool,
    seed: u64,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let gamma = env.spec().gamma;
    let zero = Vector::zeros(policy.action_dim());
    let mut returns = Vec::with_capacity(episodes);
    let mut metric_sum = 0.0;
    let mut has_metric = true;
    for i in 0..episodes {
        let mut rng = substream(seed, Stream::Eval, i as u64);
        let mut st = env.reset(&mut rng);
        let mut last = st.clone();
        let mut ret = 0.0;
        let mut discount = 1.0;
        for _ in 0..max_steps {
            let a = if stochastic {
                policy.sample(&st.s, &mut rng)?.0
            } else {
                policy.act(&st.s, &zero)?
            };
            let res = env.step(&st, &a, &mut rng)?;
            ret += discount * res.reward;
            discount *= gamma;
            last = st;
            st = EnvState::new(res.next_state, last.t + 1);
            if res.terminal {
                break;
            }
        }
        if !ret.is_finite() {
            return Err(Error::NonFinite(format!("evaluation return of rollout {i}")));
        }
        returns.push(ret);
        match env.final_metric(&last) {
            Some(m) => metric_sum += m,
            None => has_metric = false,
        }
    }
    Ok(EvalResult {
        mean_return: returns.iter().sum::<f64>() / episodes as f64,
        mean_final_metric: has_metric.then(|| metric_sum / episodes as f64),
        returns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, Lqg, LqgParams};
    use crate::Matrix;

    #[test]
    fn zero_reward_environment_returns_zero() {
        let env = Lqg::new(LqgParams {
            q: Matrix::zeros(2, 2),
            r: Matrix::zeros(1, 1),
            ..LqgParams::default()
        })
        .unwrap();
        let p = ReparamGaussianPolicy::linear(&Matrix::from_row_slice(1, 2, &[0.3, 0.2]), &Vector::from_element(1, 0.5)).unwrap();
        let r = evaluate_policy(&p, &env, 5, 20, true, 1).unwrap();
        assert_eq!(r.mean_return, 0.0);
        assert_eq!(r.mean_final_metric, None);
    }

    #[test]
    fn deterministic_per_seed() {
        let env = make_env("cartpole", &Default::default()).unwrap();
        let p = ReparamGaussianPolicy::linear(&Matrix::from_row_slice(1, 4, &[0.1, 0.2, 0.3, 0.4]), &Vector::from_element(1, 1.0)).unwrap();
        let a = evaluate_policy(&p, env.as_ref(), 3, 50, true, 9).unwrap();
        let b = evaluate_policy(&p, env.as_ref(), 3, 50, true, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, evaluate_policy(&p, env.as_ref(), 3, 50, true, 10).unwrap());
    }

    #[test]
    fn riccati_policy_return_matches_prediction() {
        let env = Lqg::new(LqgParams::default()).unwrap();
        let (_, k) = env.optimal().unwrap();
        let p = ReparamGaussianPolicy::linear(&k, &Vector::from_element(1, 1.0)).unwrap();
        let predicted = env.optimal_value().unwrap().expected_return();
        let r = evaluate_policy(&p, &env, 1000, 1500, false, 3).unwrap();
        let n = r.returns.len() as f64;
        let var = r.returns.iter().map(|x| (x - r.mean_return).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((r.mean_return - predicted).abs() <= 3.5 * se, "{} vs {predicted} (se {se})", r.mean_return);
    }

    #[test]
    fn untrained_hand_policy_ends_far_from_target() {
        let env = make_env("hand", &Default::default()).unwrap();
        let p = ReparamGaussianPolicy::linear(&Matrix::zeros(2, 8), &Vector::from_element(2, 1.0)).unwrap();
        let r = evaluate_policy(&p, env.as_ref(), 5, 2000, false, 4).unwrap();
        let d = r.mean_final_metric.unwrap();
        // The hand stays near the origin and the ball hangs below it, about
        // sqrt(1 + (1 + sag)^2) from either target.
        assert!(d > 1.0 && d < 4.0, "{d}");
    }
}
