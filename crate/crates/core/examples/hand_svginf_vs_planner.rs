//! SVG(inf) against the model-based planner on the Hand task, several
//! seeds each, reporting the final distance to the target.
//!
//! Arguments are `key=value` overrides applied to both runs, e.g.
//! `cargo run --release --example hand_svginf_vs_planner -- episodes=100`.
//! `SEEDS=n` in the environment sets the number of seeds (default 3).

use svgrad::harness::{output_root, run_experiment, suite};

fn main() -> svgrad::Result<()> {
    let sets: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = std::env::var("SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(3);
    for base in suite("hand-svginf-vs-planner")? {
        let mut finals = Vec::new();
        for seed in 0..seeds {
            let mut cfg = base.with_overrides(&sets)?;
            cfg.seed = seed;
            cfg.name = format!("{}-seed{seed}", cfg.name);
            let out = run_experiment(&cfg, &output_root())?;
            let curve: Vec<String> = out
                .rows
                .iter()
                .map(|r| format!("{:.2}", r.eval_final_metric.unwrap_or(f64::NAN)))
                .collect();
            println!("{} distance by eval: {}", cfg.name, curve.join(" "));
            if let Some(last) = out.rows.last() {
                finals.push((last.eval_return, last.eval_final_metric.unwrap_or(f64::NAN)));
            }
        }
        let n = finals.len().max(1) as f64;
        println!(
            "{}: mean final return {:.3}, mean final distance {:.3}",
            base.name,
            finals.iter().map(|f| f.0).sum::<f64>() / n,
            finals.iter().map(|f| f.1).sum::<f64>() / n
        );
    }
    Ok(())
}
