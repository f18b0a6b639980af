//! Fits the per-dimension dynamics model to cart-pole transitions collected
//! with a random policy and reports the held-out fit as training proceeds.
//!
//! `cargo run --release --example model_learning -- [hidden]`

use svgrad::diffcore::Optimizer;
use svgrad::dynmodel::DynamicsModel;
use svgrad::envs::{make_env, EnvState, Environment};
use svgrad::policy::ReparamGaussianPolicy;
use svgrad::replay::{ExperienceDatabase, Transition};
use svgrad::rng::{stream, Stream};

fn collect(env: &dyn Environment, policy: &ReparamGaussianPolicy, episodes: u64, seed: u64) -> svgrad::Result<ExperienceDatabase> {
    let mut rng = stream(seed, Stream::Env);
    let mut db = ExperienceDatabase::new(100_000);
    for ep in 0..episodes {
        let mut st = env.reset(&mut rng);
        for _ in 0..200 {
            let (a, _) = policy.sample(&st.s, &mut rng)?;
            let res = env.step(&st, &a, &mut rng)?;
            db.insert(Transition {
                behavior: policy.snapshot(&st.s)?,
                s: st.s.clone(),
                a,
                r: res.reward,
                s_next: res.next_state.clone(),
                terminal: res.terminal,
                t: st.t,
                episode_id: ep,
            })?;
            if res.terminal {
                break;
            }
            st = EnvState::new(res.next_state, st.t + 1);
        }
    }
    Ok(db)
}

fn main() -> svgrad::Result<()> {
    let hidden: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let env = make_env("cartpole", &Default::default())?;
    let spec = env.spec().clone();
    let policy = ReparamGaussianPolicy::for_env(&spec, &[20], 0.5, 0.1, &mut stream(0, Stream::Init))?;
    let train = collect(env.as_ref(), &policy, 20, 1)?;
    let test = collect(env.as_ref(), &policy, 5, 2)?;

    let mut rng = stream(0, Stream::Model);
    let mut model = DynamicsModel::random(spec.state_dim, spec.action_dim, &[hidden, hidden], &mut rng)?;
    model.refit_standardization(&train)?;
    let mut opt = Optimizer::rmsprop(3e-3, 0.9, 1e-8)?;
    println!("{} training and {} test transitions, subnets [{hidden}, {hidden}]", train.len(), test.len());
    for round in 0..=10 {
        if round > 0 {
            model.train(&train, 200, 64, &mut opt, &mut rng)?;
        }
        let mse: Vec<String> = model.mse_per_dim(test.iter())?.iter().map(|m| format!("{m:.2e}")).collect();
        println!(
            "batches {:>5}  test nll {:>8.3}  test mse per dim [{}]",
            200 * round,
            model.mean_nll(test.iter())?,
            mse.join(", ")
        );
    }
    let noise: Vec<String> = model.noise_std().iter().map(|v| format!("{v:.2e}")).collect();
    println!("learned noise std [{}]", noise.join(", "));
    Ok(())
}
