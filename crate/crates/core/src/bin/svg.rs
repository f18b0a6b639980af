#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svgrad::envs::make_env;
use svgrad::harness::{
    evaluate_policy, gradient_audit, output_root, run_experiment_with, suite, ExperimentConfig, MetricsRow, RunStatus,
    TrainingObserver,
};
use svgrad::policy::ReparamGaussianPolicy;

#[derive(Parser)]
#[command(name = "svg", about = "Stochastic value gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config (one object or an array of them).
    Run {
        config: PathBuf,
        /// Override a field, e.g. `--set policy.hidden=[50,50]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print a named preset or suite as JSON.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check SVG(inf) gradients against finite differences on the config's environment.
    Gradcheck {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Evaluate a policy checkpoint.
    Eval {
        checkpoint: PathBuf,
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Step limit for environments without a horizon.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        stochastic: bool,
    },
}

struct Printer;

impl TrainingObserver for Printer {
    fn row(&mut self, r: &MetricsRow) {
        let metric = r.eval_final_metric.map(|m| format!(" final_metric {m:.4}")).unwrap_or_default();
        println!("episode {:>6} step {:>9} return {:>12.4}{metric}", r.episode, r.step, r.eval_return);
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> svgrad::Result<ExitCode> {
    match cli.command {
        Command::Run { config, set } => {
            let root = output_root();
            let mut code = ExitCode::SUCCESS;
            for cfg in ExperimentConfig::load_all(&config)? {
                let cfg = cfg.with_overrides(&set)?;
                println!("run {} ({} on {})", cfg.name, cfg.algorithm, cfg.env);
                let out = run_experiment_with(&cfg, &root, &mut Printer)?;
                match out.status {
                    RunStatus::Completed => println!("wrote {}", out.dir.display()),
                    RunStatus::Diverged(msg) => {
                        eprintln!("{} diverged: {msg}", cfg.name);
                        code = ExitCode::from(2);
                    }
                }
            }
            Ok(code)
        }
        Command::Preset { name, out } => {
            let cfgs = suite(&name)?;
            let json = if cfgs.len() == 1 {
                cfgs[0].to_json()
            } else {
                serde_json::to_string_pretty(&cfgs)?
            };
            match out {
                Some(path) => std::fs::write(path, json + "\n")?,
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { config, seeds, tol } => {
            let mut ok = true;
            for cfg in ExperimentConfig::load_all(&config)? {
                let env = cfg.make_env()?;
                let report = gradient_audit(env.as_ref(), &cfg.policy.hidden, 1..=5, seeds, tol)?;
                for l in &report.lines {
                    let verdict = if l.rel_error <= tol { "ok" } else { "FAIL" };
                    println!("{} steps {} seed {} rel_error {:.3e} {verdict}", l.env, l.steps, l.seed, l.rel_error);
                }
                ok &= report.passed();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            steps,
            seed,
            stochastic,
        } => {
            let policy = ReparamGaussianPolicy::read_checkpoint(&mut BufReader::new(File::open(&checkpoint)?))?;
            let env = make_env(&env, &Default::default())?;
            let steps = env.spec().horizon.map_or(steps, |h| h + 1);
            let r = evaluate_policy(&policy, env.as_ref(), episodes, steps, stochastic, seed)?;
            println!("mean_return {:.6}", r.mean_return);
            if let Some(m) = r.mean_final_metric {
                println!("mean_final_metric {m:.6}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
