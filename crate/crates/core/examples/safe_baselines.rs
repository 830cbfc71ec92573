//! Compare the rule-based baseline, an offline model-based baseline trained
//! on random-policy data, and a uniformly random policy.
//!
//!     cargo run --release --example safe_baselines

use rand::{Rng as _, SeedableRng};
use tiltshield::baselines::{train_offline_baseline, OfflineTrainingConfig, RuleBasedPolicy};
use tiltshield::env::{CellState, Env, EpisodeConfig, TiltAction};
use tiltshield::harness::synthesize_dataset;
use tiltshield::rng::Rng;
use tiltshield::sim::{SimConfig, Simulator};

fn evaluate(env: &mut Env, mut policy: impl FnMut(&CellState) -> TiltAction) -> tiltshield::Result<f64> {
    let mut total = 0.0;
    let mut steps = 0;
    for seed in 0..20 {
        env.reset(1_000 + seed)?;
        while !env.episode_done() {
            let actions: Vec<TiltAction> = env.states().iter().map(&mut policy).collect();
            total += env.step(&actions)?.mean_reward();
            steps += 1;
        }
    }
    Ok(total / steps as f64)
}

fn main() -> tiltshield::Result<()> {
    let sim_cfg = SimConfig::default();
    let data = synthesize_dataset(&sim_cfg, 20, 10_000, 0)?;
    println!("synthesized {} transitions", data.len());
    let model = train_offline_baseline(&data, 0, &OfflineTrainingConfig::default())?;

    let mut env = Env::new(Simulator::from_config(&sim_cfg)?, EpisodeConfig { episode_length: 20, n_episodes: 20 })?;
    let rule = RuleBasedPolicy::default();
    let mut rng = Rng::seed_from_u64(3);
    println!("rule   {:.4}", evaluate(&mut env, |s| rule.propose(s))?);
    println!("model  {:.4}", evaluate(&mut env, |s| model.propose(s))?);
    println!("random {:.4}", evaluate(&mut env, |_| TiltAction::ALL[rng.gen_range(0..3)])?);
    Ok(())
}
