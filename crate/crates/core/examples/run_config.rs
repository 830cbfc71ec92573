//! Run an experiment described by a TOML file and print the per-seed
//! evaluation summary. Defaults to the bundled baseline-only config.
//!
//!     cargo run --release --example run_config -- configs/k_shield.toml

use tiltshield::harness::{run_experiment, ExperimentConfig, SeedStatus};

fn main() -> tiltshield::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/baseline_rule.toml").to_owned());
    let cfg = ExperimentConfig::from_file(&path)?;
    println!("{} with {} seeds x {} episodes", cfg.scenario.as_str(), cfg.seeds.len(), cfg.n_train_episodes);
    let summary = run_experiment(&cfg)?;
    for s in &summary.seeds {
        let n = s.eval.len().max(1) as f64;
        let reward = s.eval.iter().map(|m| m.reward).sum::<f64>() / n;
        match &s.status {
            SeedStatus::Completed => println!("seed {}: eval reward {reward:.4}", s.seed),
            SeedStatus::Failed(msg) => println!("seed {}: failed ({msg})", s.seed),
        }
    }
    let last = summary.aggregate.last().expect("at least one episode");
    println!(
        "final smoothed reward {:.4} [{:.4}, {:.4}], outputs in {}",
        last.reward.mean,
        last.reward.min,
        last.reward.max,
        summary.output_dir.display()
    );
    Ok(())
}
