//! A DQN with discount 0 on a three-context bandit: each context has one
//! action with reward 0, the others -1.
//!
//!     cargo run --release --example dqn_bandit

use rand::{Rng as _, SeedableRng};
use tiltshield::agents::{DqnAgent, DqnConfig};
use tiltshield::env::{CellState, TiltAction, Transition};
use tiltshield::rng::Rng;
use tiltshield::shield::Proposer;

fn main() -> tiltshield::Result<()> {
    let contexts = [
        (CellState { tilt_norm: 0.9, cov: 0.6, cap: 0.5, qual: 0.1 }, TiltAction::Up),
        (CellState { tilt_norm: 0.5, cov: 0.1, cap: 0.5, qual: 0.1 }, TiltAction::Hold),
        (CellState { tilt_norm: 0.1, cov: 0.1, cap: 0.5, qual: 0.6 }, TiltAction::Down),
    ];
    let mut agent = DqnAgent::new(DqnConfig { learning_rate: 0.01, ..DqnConfig::default() }, 0)?;
    let mut rng = Rng::seed_from_u64(1);
    for step in 0..600 {
        let (s, best) = contexts[rng.gen_range(0..3)];
        let a = agent.propose(&s, true);
        let r = if a == best { 0.0 } else { -1.0 };
        agent.observe(&Transition { cell: 0, state: s, action: a, reward: r, next_state: s, episode: 1, step })?;
        if step % 100 == 99 {
            agent.end_episode();
            println!("step {:>3}  epsilon {:.2}  loss {:?}", step + 1, agent.epsilon(), agent.last_loss());
        }
    }
    for (s, best) in contexts {
        let q = agent.q_values(&s);
        println!(
            "context cov {:.1} qual {:.1}: Q {:>7.3?} greedy {:?} (best {best:?})",
            s.cov,
            s.qual,
            q,
            agent.propose(&s, false)
        );
    }
    Ok(())
}
