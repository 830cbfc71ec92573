mod common;

use common::{chi_square_passes, uniform};
use rand::SeedableRng;
use tiltshield::agents::{AcAgent, AcConfig, DqnAgent, DqnConfig, ReplayBuffer};
use tiltshield::env::{CellState, Env, EpisodeConfig, TiltAction, Transition};
use tiltshield::harness::synthesize_dataset;
use tiltshield::nn::Mlp;
use tiltshield::rng::Rng;
use tiltshield::shield::{KShieldState, Proposal, Proposer, SourceId};
use tiltshield::sim::Simulator;

fn state() -> CellState {
    CellState { tilt_norm: 0.4, cov: 0.2, cap: 0.5, qual: 0.1 }
}

#[test]
fn resets_draw_uniform_integer_tilts() {
    let sim = Simulator::from_config(&common::small_sim()).unwrap();
    let mut env = Env::new(sim, EpisodeConfig { episode_length: 1, n_episodes: 1 }).unwrap();
    let mut first_cell = vec![0u64; 16];
    let mut pooled = vec![0u64; 16];
    for seed in 0..10_000u64 {
        env.reset(seed).unwrap();
        for (c, &t) in env.tilts().iter().enumerate() {
            assert_eq!(t.fract(), 0.0);
            let bin = t as usize - 1;
            pooled[bin] += 1;
            if c == 0 {
                first_cell[bin] += 1;
            }
        }
    }
    for hist in [&first_cell, &pooled] {
        let (ok, stat, crit) = chi_square_passes(hist, &uniform(16));
        assert!(ok, "chi2 {stat} >= {crit}");
    }
}

#[test]
fn dqn_full_exploration_is_uniform() {
    let mut agent = DqnAgent::new(DqnConfig::default(), 3).unwrap();
    agent.set_epsilon(1.0);
    let mut hist = vec![0u64; 3];
    for _ in 0..10_000 {
        hist[agent.propose(&state(), true).index()] += 1;
    }
    assert!(chi_square_passes(&hist, &uniform(3)).0, "{hist:?}");
}

#[test]
fn actor_critic_symmetric_logits_sample_uniformly() {
    let mut agent = AcAgent::new(AcConfig::default(), 4).unwrap();
    let dims = agent.actor().layer_dims().to_vec();
    let zero = Mlp::from_parts(
        dims.clone(),
        dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
        dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
    )
    .unwrap();
    agent.set_actor(zero).unwrap();
    let mut hist = vec![0u64; 3];
    for _ in 0..10_000 {
        hist[agent.propose(&state(), true).index()] += 1;
    }
    assert!(chi_square_passes(&hist, &uniform(3)).0, "{hist:?}");
}

fn kshield_histogram(k: f64, b: Vec<f64>, draws: usize) -> Vec<u64> {
    let n_b = b.len();
    let ks = KShieldState::new(k, 0.1, 2, b).unwrap();
    let mut rng = Rng::seed_from_u64(17);
    let baselines: Vec<Proposal> = (0..n_b)
        .map(|i| Proposal { source: SourceId(i), action: TiltAction::Hold })
        .collect();
    let agent = Proposal { source: SourceId(n_b), action: TiltAction::Up };
    let mut hist = vec![0u64; n_b + 1];
    for _ in 0..draws {
        let d = ks.decide(agent, &baselines, &mut rng).unwrap();
        hist[d.source.0] += 1;
    }
    hist
}

#[test]
fn kshield_source_frequencies_follow_product_law() {
    let hist = kshield_histogram(0.6, vec![0.7, 0.3], 100_000);
    let (ok, stat, crit) = chi_square_passes(&hist, &[0.42, 0.18, 0.40]);
    assert!(ok, "{hist:?}: chi2 {stat} >= {crit}");
}

#[test]
fn kshield_degenerate_k() {
    let all_baseline = kshield_histogram(1.0, vec![0.25, 0.75], 100_000);
    assert_eq!(all_baseline[2], 0);
    assert!(chi_square_passes(&all_baseline[..2], &[0.25, 0.75]).0);
    let all_agent = kshield_histogram(0.0, vec![0.5, 0.5], 10_000);
    assert_eq!(all_agent, vec![0, 0, 10_000]);
}

#[test]
fn replay_sampling_is_uniform() {
    let mut replay = ReplayBuffer::new(50);
    let t = Transition {
        cell: 0,
        state: state(),
        action: TiltAction::Hold,
        reward: -0.1,
        next_state: state(),
        episode: 1,
        step: 0,
    };
    for _ in 0..50 {
        replay.push(t);
    }
    let mut rng = Rng::seed_from_u64(5);
    let mut hist = vec![0u64; 50];
    for _ in 0..2_000 {
        for i in replay.sample_indices(50, &mut rng) {
            hist[i] += 1;
        }
    }
    assert!(chi_square_passes(&hist, &uniform(50)).0);
}

#[test]
fn synthesized_actions_are_uniform() {
    let data = synthesize_dataset(&common::small_sim(), 20, 6_300, 3).unwrap();
    let mut hist = vec![0u64; 3];
    for t in &data {
        hist[t.action.index()] += 1;
        t.state.check().unwrap();
        t.next_state.check().unwrap();
    }
    assert!(chi_square_passes(&hist, &uniform(3)).0, "{hist:?}");
}
