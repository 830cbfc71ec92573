//! Train a state predictor, then let it arbitrate between the rule baseline
//! and a learning DQN agent. Prints which source won each episode's actions.
//!
//!     cargo run --release --example predictor_shield

use tiltshield::agents::{DqnAgent, DqnConfig};
use tiltshield::baselines::RuleBasedPolicy;
use tiltshield::env::{Env, EpisodeConfig};
use tiltshield::harness::{predictor_samples, synthesize_dataset};
use tiltshield::rng::{derive_seed, stream};
use tiltshield::shield::{PredictorTrainingConfig, Shield, ShieldLogic, StatePredictor};
use tiltshield::sim::{SimConfig, Simulator};

fn main() -> tiltshield::Result<()> {
    let sim_cfg = SimConfig::default();
    let data = synthesize_dataset(&sim_cfg, 20, 20_000, 0)?;
    let (predictor, report) = StatePredictor::train(&predictor_samples(&data), 0, &PredictorTrainingConfig::default())?;
    println!("held-out RMSE cov/cap/qual {:.4?}", report.heldout_rmse);

    let episodes = 15;
    let env = Env::new(Simulator::from_config(&sim_cfg)?, EpisodeConfig { episode_length: 20, n_episodes: episodes })?;
    let mut shield = Shield::new(env, ShieldLogic::StatePredictor(predictor), 1).without_log();
    let rule = shield.register("rule", Box::new(RuleBasedPolicy::default()))?;
    shield.register("dqn", Box::new(DqnAgent::new(DqnConfig::default(), 1)?))?;

    for e in 1..=episodes {
        shield.reset(derive_seed(1, stream::RESET, e as u64))?;
        let (mut reward, mut from_rule, mut total) = (0.0, 0, 0);
        while !shield.episode_done() {
            let step = shield.step(true)?;
            reward += step.outcome.mean_reward();
            from_rule += step.decisions.iter().filter(|d| d.source == rule).count();
            total += step.decisions.len();
        }
        shield.end_episode(reward / 20.0);
        println!("episode {e:>2}  reward {:.4}  rule share {:.2}", reward / 20.0, from_rule as f64 / total as f64);
    }
    Ok(())
}
