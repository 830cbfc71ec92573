mod common;

use rand::{Rng as _, SeedableRng};
use tiltshield::agents::{DqnAgent, DqnConfig};
use tiltshield::baselines::{train_offline_baseline, ModelBasedPolicy, OfflineTrainingConfig};
use tiltshield::env::{CellState, Env, EpisodeConfig, TiltAction, Transition};
use tiltshield::harness::{predictor_samples, synthesize_dataset};
use tiltshield::rng::{derive_seed, stream, Rng};
use tiltshield::shield::{PredictorSample, PredictorTrainingConfig, Proposer, StatePredictor};
use tiltshield::sim::{CellKpis, Simulator};

fn random_state(rng: &mut Rng) -> CellState {
    CellState {
        tilt_norm: rng.gen(),
        cov: rng.gen_range(0.0..0.5),
        cap: rng.gen_range(0.3..0.7),
        qual: rng.gen_range(0.0..0.3),
    }
}

/// Three-context bandit with a fixed best action per context.
const CONTEXTS: [(CellState, TiltAction); 3] = [
    (CellState { tilt_norm: 0.9, cov: 0.6, cap: 0.5, qual: 0.1 }, TiltAction::Up),
    (CellState { tilt_norm: 0.5, cov: 0.1, cap: 0.5, qual: 0.1 }, TiltAction::Hold),
    (CellState { tilt_norm: 0.1, cov: 0.1, cap: 0.5, qual: 0.6 }, TiltAction::Down),
];

fn context(rng: &mut Rng) -> CellState {
    CONTEXTS[rng.gen_range(0..3)].0
}

fn best_action(s: &CellState) -> TiltAction {
    CONTEXTS.iter().find(|(c, _)| c == s).unwrap().1
}

fn bandit_reward(s: &CellState, a: TiltAction) -> f64 {
    if a == best_action(s) {
        0.0
    } else {
        -1.0
    }
}

#[test]
fn dqn_solves_contextual_bandit() {
    // 500 observes leave about 450 updates, too few at the default step size.
    let cfg = DqnConfig { learning_rate: 0.01, ..DqnConfig::default() };
    let mut agent = DqnAgent::new(cfg, 21).unwrap();
    let mut rng = Rng::seed_from_u64(1);
    for i in 0..500 {
        let s = context(&mut rng);
        let a = agent.propose(&s, true);
        let t = Transition {
            cell: 0,
            state: s,
            action: a,
            reward: bandit_reward(&s, a),
            next_state: s,
            episode: 1,
            step: i,
        };
        agent.observe(&t).unwrap();
    }
    let trials = 1_000;
    let correct = (0..trials)
        .filter(|_| {
            let s = context(&mut rng);
            agent.propose(&s, false) == best_action(&s)
        })
        .count();
    let acc = correct as f64 / trials as f64;
    assert!(acc >= 0.9, "greedy accuracy {acc}");
}

fn constructed_dataset() -> Vec<Transition> {
    let mut rng = Rng::seed_from_u64(2);
    (0..3_000)
        .map(|i| {
            let s = random_state(&mut rng);
            let a = TiltAction::ALL[i % 3];
            let r = if a == TiltAction::Hold { 0.0 } else { -1.0 };
            Transition { cell: 0, state: s, action: a, reward: r, next_state: s, episode: 1, step: i }
        })
        .collect()
}

#[test]
fn offline_baseline_recovers_known_optimum() {
    let data = constructed_dataset();
    let cfg = OfflineTrainingConfig::default();
    let policy = train_offline_baseline(&data, 4, &cfg).unwrap();
    let mut rng = Rng::seed_from_u64(3);
    for _ in 0..500 {
        assert_eq!(policy.propose(&random_state(&mut rng)), TiltAction::Hold);
    }
    assert_eq!(policy, train_offline_baseline(&data, 4, &cfg).unwrap());
}

#[test]
fn offline_baseline_beats_random_policy_on_simulator() {
    let sim_cfg = common::small_sim();
    let data = synthesize_dataset(&sim_cfg, 20, 5_000, 8).unwrap();
    let policy = train_offline_baseline(&data, 8, &OfflineTrainingConfig::default()).unwrap();

    let sim = Simulator::from_config(&sim_cfg).unwrap();
    let mut env = Env::new(sim, EpisodeConfig { episode_length: 20, n_episodes: 25 }).unwrap();
    let mut rng = Rng::seed_from_u64(9);
    let mut evaluate = |choose: &mut dyn FnMut(&CellState) -> TiltAction| {
        let mut total = 0.0;
        for e in 1..=25u64 {
            env.reset(derive_seed(99, stream::RESET, e)).unwrap();
            while !env.episode_done() {
                let actions: Vec<TiltAction> = env.states().iter().map(&mut *choose).collect();
                total += env.step(&actions).unwrap().mean_reward();
            }
        }
        total / (25.0 * 20.0)
    };
    let model = evaluate(&mut |s| policy.propose(s));
    let random = evaluate(&mut |_| TiltAction::ALL[rng.gen_range(0..3)]);
    assert!(model >= random, "model {model} < random {random}");
}

#[test]
fn predictor_learns_constant_map() {
    let mut rng = Rng::seed_from_u64(4);
    let data: Vec<PredictorSample> = (0..5_000)
        .map(|i| {
            let k = CellKpis {
                cov: rng.gen_range(0.0..1.0),
                cap: rng.gen_range(0.0..1.0),
                qual: rng.gen_range(0.0..1.0),
            };
            (k, TiltAction::ALL[i % 3], k)
        })
        .collect();
    let cfg = PredictorTrainingConfig::default();
    let (pred, report) = StatePredictor::train(&data, 5, &cfg).unwrap();
    assert_eq!((report.n_train, report.n_heldout), (4_000, 1_000));
    assert!(report.max_rmse() < 0.02, "{report:?}");
    let (again, _) = StatePredictor::train(&data, 5, &cfg).unwrap();
    assert_eq!(pred, again);
}

#[test]
fn predictor_fits_simulator_transitions() {
    let data = synthesize_dataset(&common::small_sim(), 20, 10_000, 6).unwrap();
    let (_, report) =
        StatePredictor::train(&predictor_samples(&data), 6, &PredictorTrainingConfig::default()).unwrap();
    for rmse in report.heldout_rmse {
        assert!(rmse <= 0.1, "{report:?}");
    }
}

#[test]
fn model_baseline_matches_forward_oracle() {
    let net = tiltshield::nn::Mlp::init(&[4, 32, 32, 3], 12).unwrap();
    let policy = ModelBasedPolicy::new(net.clone()).unwrap();
    let mut rng = Rng::seed_from_u64(13);
    for _ in 0..200 {
        let s = random_state(&mut rng);
        let q = net.forward(&s.to_input()).unwrap();
        let mut best = 0;
        for i in 1..3 {
            if q[i] > q[best] {
                best = i;
            }
        }
        assert_eq!(policy.propose(&s), TiltAction::ALL[best]);
        assert_eq!(policy.propose(&s), policy.propose(&s));
    }
}
