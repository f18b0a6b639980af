//! Fitted evaluation of a fixed linear controller on the LQG task, compared
//! with its exact quadratic value function.
//!
//! `cargo run --release --example fitted_policy_evaluation -- [rounds]`

use svgrad::diffcore::Optimizer;
use svgrad::envs::{EnvState, Environment, Lqg, LqgParams};
use svgrad::policy::ReparamGaussianPolicy;
use svgrad::replay::{ExperienceDatabase, Transition};
use svgrad::rng::{stream, Stream};
use svgrad::valuefn::{EvaluationSettings, ValueCritic};
use svgrad::Vector;

fn main() -> svgrad::Result<()> {
    let rounds: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(60);
    let env = Lqg::new(LqgParams::default())?;
    let (_, k) = env.optimal()?;
    let std = Vector::from_element(1, 0.3);
    let policy = ReparamGaussianPolicy::linear(&k, &std)?;
    let truth = env.policy_value(&k, &std)?;

    let mut rng = stream(0, Stream::Env);
    let mut db = ExperienceDatabase::new(100_000);
    for ep in 0..100 {
        let mut st = env.reset(&mut rng);
        for _ in 0..100 {
            let (a, _) = policy.sample(&st.s, &mut rng)?;
            let res = env.step(&st, &a, &mut rng)?;
            db.insert(Transition {
                behavior: policy.snapshot(&st.s)?,
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

    let mut critic = ValueCritic::random(2, &[64, 64], 30.0, env.params().gamma, None, &mut stream(0, Stream::Init))?;
    let settings = EvaluationSettings { updates: 1000, batch_size: 32, w_max: 5.0 };
    let probes: Vec<Vector> = db.iter().step_by(37).map(|tr| tr.s.clone()).collect();
    for round in 0..rounds {
        // Step size drops tenfold after each third of the rounds.
        let lr = 1e-3 * 0.1f64.powi((3 * round / rounds) as i32);
        let mut opt = Optimizer::rmsprop(lr, 0.9, 1e-8)?;
        let report = critic.fit(&db, &policy, &settings, &mut opt, &mut rng)?;
        if round % 10 == 9 {
            let mut err = 0.0;
            for s in &probes {
                err += (critic.value(s, 0)? - truth.value(s)).abs() / truth.value(s).abs();
            }
            println!(
                "updates {:>6}  loss {:>8.4}  mean relative value error {:.2}%",
                1000 * (round + 1),
                report.mean_loss,
                100.0 * err / probes.len() as f64
            );
        }
    }
    for s in [Vector::zeros(2), Vector::from_vec(vec![1.0, -1.0]), Vector::from_vec(vec![-2.0, 0.5])] {
        println!("V({:?}) fitted {:>8.3} exact {:>8.3}", s.as_slice(), critic.value(&s, 0)?, truth.value(&s));
    }
    Ok(())
}
