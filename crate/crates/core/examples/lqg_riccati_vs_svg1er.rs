//! Trains SVG(1)-ER on the linear-quadratic-Gaussian task and compares the
//! learned controller with the Riccati solution.
//!
//! Extra arguments are `key=value` config overrides, e.g.
//! `cargo run --release --example lqg_riccati_vs_svg1er -- episodes=50 seed=3`.

use svgrad::envs::{EnvState, Environment, Lqg, LqgParams};
use svgrad::harness::{evaluate_policy, output_root, preset, run_experiment};
use svgrad::policy::ReparamGaussianPolicy;
use svgrad::rng::{substream, Stream};
use svgrad::Vector;

fn main() -> svgrad::Result<()> {
    let sets: Vec<String> = std::env::args().skip(1).collect();
    let cfg = preset("lqg-svg1er")?.with_overrides(&sets)?;
    let out = run_experiment(&cfg, &output_root())?;
    for r in out.rows.iter().step_by(5) {
        println!("episode {:>4} return {:>9.3}", r.episode, r.eval_return);
    }

    let env = Lqg::new(LqgParams::default())?;
    let (_, k) = env.optimal()?;
    let states = visited_states(&out.policy, &env, 100, 1234)?;
    let mut err = 0.0;
    for s in &states {
        let j = out.policy.derivatives(s, &Vector::zeros(1))?.pi_s()?;
        err += (j + &k).norm() / k.norm() / states.len() as f64;
    }
    let riccati = ReparamGaussianPolicy::linear(&k, &Vector::from_element(1, 1.0))?;
    let ours = evaluate_policy(&out.policy, &env, 500, 300, false, 77)?.mean_return;
    let best = evaluate_policy(&riccati, &env, 500, 300, false, 77)?.mean_return;
    println!("riccati gain {:?}, policy std {:?}", k.as_slice(), out.policy.std().as_slice());
    println!("relative gain error {err:.4}");
    println!("return {ours:.3} vs riccati {best:.3} (gap {:.2}%)", 100.0 * (ours - best) / best.abs());
    Ok(())
}

/// `n` states spread over noise-free-policy rollouts of 100 steps, one state
/// every tenth step.
fn visited_states(p: &ReparamGaussianPolicy, env: &Lqg, n: usize, seed: u64) -> svgrad::Result<Vec<Vector>> {
    let zero = Vector::zeros(p.action_dim());
    let mut out = Vec::with_capacity(n);
    for i in 0.. {
        let mut rng = substream(seed, Stream::Eval, i);
        let mut st = env.reset(&mut rng);
        for t in 0..100 {
            if t % 10 == 0 {
                out.push(st.s.clone());
                if out.len() == n {
                    return Ok(out);
                }
            }
            let res = env.step(&st, &p.act(&st.s, &zero)?, &mut rng)?;
            st = EnvState::new(res.next_state, st.t + 1);
        }
    }
    unreachable!()
}

