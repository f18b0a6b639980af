//! Trains briefly, reloads the policy and model checkpoints written to the
//! run directory and checks that the reloaded policy evaluates identically.
//!
//! `cargo run --release --example checkpoints`

use std::fs::File;
use std::io::BufReader;

use svgrad::dynmodel::DynamicsModel;
use svgrad::harness::{evaluate_policy, output_root, preset, run_experiment};
use svgrad::policy::ReparamGaussianPolicy;

fn main() -> svgrad::Result<()> {
    let cfg = preset("lqg-svg1er")?.with_overrides(&["episodes=20", "name=checkpoint-demo"])?;
    let out = run_experiment(&cfg, &output_root())?;
    println!("trained {} episodes into {}", cfg.episodes, out.dir.display());

    let policy = ReparamGaussianPolicy::read_checkpoint(&mut BufReader::new(File::open(out.dir.join("policy.ckpt"))?))?;
    let model = DynamicsModel::read_checkpoint(&mut BufReader::new(File::open(out.dir.join("model.ckpt"))?))?;
    println!("policy parameters identical: {}", policy == out.policy);
    println!("model parameters identical: {}", Some(&model) == out.model.as_ref());

    let env = cfg.make_env()?;
    let steps = cfg.episode_steps(env.as_ref())?;
    let a = evaluate_policy(&out.policy, env.as_ref(), 20, steps, false, 5)?;
    let b = evaluate_policy(&policy, env.as_ref(), 20, steps, false, 5)?;
    println!("evaluation return {:.4} in memory, {:.4} reloaded", a.mean_return, b.mean_return);
    Ok(())
}
