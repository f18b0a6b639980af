//! Checks the SVG(inf) backward recursion against central finite differences
//! of the frozen-noise return on every environment, using the true
//! environment derivatives.
//!
//! `cargo run --release --example gradient_audit -- [seeds] [max_steps]`

use svgrad::envs::{make_env, ENV_IDS};
use svgrad::harness::gradient_audit;

fn main() -> svgrad::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seeds = args.first().copied().unwrap_or(5);
    let max_steps = args.get(1).copied().unwrap_or(5) as usize;
    for id in ENV_IDS {
        let env = make_env(id, &Default::default())?;
        let report = gradient_audit(env.as_ref(), &[10, 10], 1..=max_steps, seeds, 1e-4)?;
        for steps in 1..=max_steps {
            let worst = report
                .lines
                .iter()
                .filter(|l| l.steps == steps)
                .map(|l| l.rel_error)
                .fold(0.0, f64::max);
            println!("{id:<9} steps {steps}  worst relative error {worst:.2e}");
        }
        println!("{id:<9} {}", if report.passed() { "ok" } else { "FAILED" });
    }
    Ok(())
}
