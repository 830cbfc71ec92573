//! Run an unrestricted DQN and a k-shielded DQN on a reduced network and
//! align their reward curves.
//!
//!     cargo run --release --example compare_scenarios

use std::path::Path;

use tiltshield::harness::{compare_runs, run_experiment, ExperimentConfig};

fn run(root: &Path, name: &str, body: &str) -> tiltshield::Result<std::path::PathBuf> {
    let text = format!(
        "{body}\nseeds = [1, 2, 3]\nn_train_episodes = 40\nn_eval_episodes = 5\noutput_dir = \"{name}\"\n\
         decision_log = false\n[sim]\nn_ues = 500\n"
    );
    let cfg = ExperimentConfig::from_toml_str(&text, root)?;
    Ok(run_experiment(&cfg)?.output_dir)
}

fn main() -> tiltshield::Result<()> {
    let root = std::env::temp_dir().join("tiltshield_compare");
    let free = run(&root, "unrestricted", "scenario = \"unrestricted-dqn\"")?;
    let shielded = run(&root, "k_shield", "scenario = \"k-shield\"\nbaselines = [\"rule\"]\nd = 0.1\nw = 2")?;
    let c = compare_runs(&[free, shielded], "reward")?;
    println!("{:>8} {:>14} {:>14}", "episode", c.labels[0], c.labels[1]);
    for (i, e) in c.episodes.iter().enumerate().step_by(5) {
        println!("{e:>8} {:>14.4} {:>14.4}", c.values[0][i], c.values[1][i]);
    }
    println!("first quarter {:.4?}, last quarter {:.4?}", c.early_mean, c.final_mean);
    println!("outputs under {}", root.display());
    Ok(())
}
