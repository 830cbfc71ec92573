//! k-shield mixing a rule baseline with a DQN agent. k starts near 1 and is
//! lowered by d every w episodes in which the recent reward did not drop.
//!
//!     cargo run --release --example k_shield_schedule

use tiltshield::agents::{DqnAgent, DqnConfig};
use tiltshield::baselines::RuleBasedPolicy;
use tiltshield::env::{Env, EpisodeConfig};
use tiltshield::rng::{derive_seed, stream};
use tiltshield::shield::{KShieldState, ProposerKind, Shield, ShieldLogic};
use tiltshield::sim::{SimConfig, Simulator};

fn main() -> tiltshield::Result<()> {
    let sim_cfg = SimConfig { n_ues: 600, ..SimConfig::default() };
    let episodes = 60;
    let env = Env::new(Simulator::from_config(&sim_cfg)?, EpisodeConfig { episode_length: 20, n_episodes: episodes })?;
    let logic = ShieldLogic::KShield(KShieldState::new(0.95, 0.1, 2, vec![1.0])?);
    let mut shield = Shield::new(env, logic, 4).without_log();
    shield.register("rule", Box::new(RuleBasedPolicy::default()))?;
    shield.register("dqn", Box::new(DqnAgent::new(DqnConfig::default(), 4)?))?;

    for e in 1..=episodes {
        shield.reset(derive_seed(4, stream::RESET, e as u64))?;
        let k = shield.k().unwrap_or(f64::NAN);
        let (mut reward, mut agent, mut total) = (0.0, 0, 0);
        while !shield.episode_done() {
            let step = shield.step(true)?;
            reward += step.outcome.mean_reward();
            agent += step.decisions.iter().filter(|d| shield.source_kind(d.source) == ProposerKind::Agent).count();
            total += step.decisions.len();
        }
        let mean = reward / 20.0;
        shield.end_episode(mean);
        if e % 5 == 0 || e == 1 {
            println!("episode {e:>2}  k {k:.2}  agent share {:.2}  reward {mean:.4}", agent as f64 / total as f64);
        }
    }
    Ok(())
}
