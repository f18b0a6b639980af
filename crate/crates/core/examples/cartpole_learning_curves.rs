//! Learning curves of SVG(1)-ER, SVG(1) and the actor-critic baseline on the
//! cart-pole swing-up, with the environment steps each run needed to reach
//! an evaluation-return threshold.
//!
//! Arguments are `key=value` overrides applied to every run. `SEEDS` sets the
//! number of seeds (default 3) and `THRESHOLD` the return threshold
//! (default -42).

use svgrad::harness::{output_root, run_experiment, suite};

fn main() -> svgrad::Result<()> {
    let sets: Vec<String> = std::env::args().skip(1).collect();
    let env_num = |k: &str, d: f64| std::env::var(k).ok().and_then(|s| s.parse().ok()).unwrap_or(d);
    let seeds = env_num("SEEDS", 3.0) as u64;
    let threshold = env_num("THRESHOLD", -42.0);
    for base in suite("cartpole-comparison")? {
        let mut reached = Vec::new();
        for seed in 0..seeds {
            let mut cfg = base.with_overrides(&sets)?;
            cfg.seed = seed;
            cfg.name = format!("{}-seed{seed}", cfg.name);
            let out = run_experiment(&cfg, &output_root())?;
            let curve: Vec<String> = out.rows.iter().map(|r| format!("{:.1}", r.eval_return)).collect();
            println!("{}: {}", cfg.name, curve.join(" "));
            reached.push(out.rows.iter().find(|r| r.eval_return >= threshold).map(|r| r.step));
        }
        let fmt: Vec<String> = reached
            .iter()
            .map(|s| s.map_or("never".to_string(), |s| s.to_string()))
            .collect();
        println!("{} steps to return {threshold}: {}", base.name, fmt.join(", "));
    }
    Ok(())
}
