//! Train the actor-critic agent directly on a reduced network, without a
//! shield, and report the mean reward per block of episodes.
//!
//!     cargo run --release --example actor_critic

use tiltshield::agents::{AcAgent, AcConfig};
use tiltshield::env::{Env, EpisodeConfig, TiltAction};
use tiltshield::rng::{derive_seed, stream};
use tiltshield::shield::Proposer;
use tiltshield::sim::{SimConfig, Simulator};

fn main() -> tiltshield::Result<()> {
    let sim_cfg = SimConfig { n_ues: 500, ..SimConfig::default() };
    let episodes = 60;
    let mut env = Env::new(Simulator::from_config(&sim_cfg)?, EpisodeConfig { episode_length: 20, n_episodes: episodes })?;
    let mut agent = AcAgent::new(AcConfig::default(), 2)?;
    let mut block = 0.0;
    for e in 1..=episodes {
        env.reset(derive_seed(2, stream::RESET, e as u64))?;
        let mut reward = 0.0;
        while !env.episode_done() {
            let actions: Vec<TiltAction> = env.states().iter().map(|s| agent.propose(s, true)).collect();
            let out = env.step(&actions)?;
            for t in &out.transitions {
                agent.observe(t)?;
            }
            reward += out.mean_reward();
        }
        agent.end_episode();
        block += reward / 20.0;
        if e % 10 == 0 {
            println!("episodes {:>2}-{e:>2}  mean reward {:.4}", e - 9, block / 10.0);
            block = 0.0;
        }
    }
    Ok(())
}
