//! Importance-weighted SVG(1) replay on data from an older LQG controller:
//! the weights seen by the current policy and how the KL penalty limits
//! each replay update.
//!
//! `cargo run --release --example replay_importance_weights`

use svgrad::diffcore::Optimizer;
use svgrad::dynmodel::DynamicsModel;
use svgrad::envs::{EnvState, Environment, Lqg, LqgParams};
use svgrad::policy::ReparamGaussianPolicy;
use svgrad::replay::{importance_weight, ExperienceDatabase, Transition};
use svgrad::rng::{stream, Stream};
use svgrad::svg::{kl_regularized_replay_update, svg1_gradient, ReplaySettings, StateValueGradient};
use svgrad::{Result, Vector};

/// Exact value gradient of the Riccati controller.
struct Exact(svgrad::envs::LinearPolicyValue, f64);

impl StateValueGradient for Exact {
    fn gamma(&self) -> f64 {
        self.1
    }

    fn value_gradient(&self, s: &Vector, _t: usize) -> Result<Vector> {
        Ok(self.0.value_gradient(s))
    }
}

fn main() -> Result<()> {
    let env = Lqg::new(LqgParams::default())?;
    let pr = env.params().clone();
    let model = DynamicsModel::from_linear(&pr.a, &pr.b, &Vector::from_element(2, pr.noise_std))?;
    let (_, k) = env.optimal()?;
    let std = Vector::from_element(1, 0.5);
    let critic = Exact(env.policy_value(&k, &std)?, pr.gamma);

    // Data from a controller with half the optimal gain.
    let old = ReparamGaussianPolicy::linear(&(&k * 0.5), &std)?;
    let mut rng = stream(0, Stream::Env);
    let mut db = ExperienceDatabase::new(10_000);
    for ep in 0..20 {
        let mut st = env.reset(&mut rng);
        for _ in 0..50 {
            let (a, _) = old.sample(&st.s, &mut rng)?;
            let res = env.step(&st, &a, &mut rng)?;
            db.insert(Transition {
                behavior: old.snapshot(&st.s)?,
                s: st.s.clone(),
                a,
                r: res.reward,
                s_next: res.next_state.clone(),
                terminal: false,
                t: st.t,
                episode_id: ep,
            })?;
            st = EnvState::new(res.next_state, st.t + 1);
        }
    }

    for scale in [0.5, 0.75, 1.0] {
        let current = ReparamGaussianPolicy::linear(&(&k * scale), &std)?;
        let w: Vec<f64> = db.iter().map(|tr| importance_weight(&current, tr, 5.0)).collect::<Result<_>>()?;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let truncated = w.iter().filter(|&&v| v >= 5.0).count();
        let g = svg1_gradient(db.get(0).unwrap(), &model, &current, &critic, &env, 5.0)?;
        println!(
            "gain x{scale:<4}  mean weight {mean:.3}  truncated {truncated:>3}  first-sample weight {:.3}",
            g.weight
        );
    }

    let start = ReparamGaussianPolicy::linear(&(&k * 0.5), &std)?;
    for beta in [0.0, 1.0, 10.0, 100.0] {
        let mut policy = start.clone();
        let settings = ReplaySettings { steps: 20, batch_size: 32, beta, w_max: 5.0, v_max: 1.0, learn_std: false };
        let mut opt = Optimizer::sgd(0.05)?;
        let report = kl_regularized_replay_update(&mut policy, &db, &model, &critic, &env, &settings, &mut opt, &mut stream(0, Stream::Replay))?;
        let gain = policy.derivatives(&Vector::zeros(2), &Vector::zeros(1))?.pi_s()?;
        let gain = -gain;
        println!(
            "beta {beta:>5}  displacement {:.4}  mean weight {:.3}  gain [{:.3}, {:.3}] (optimal [{:.3}, {:.3}])",
            report.displacement, report.mean_weight, gain[0], gain[1], k[0], k[1]
        );
    }
    Ok(())
}
