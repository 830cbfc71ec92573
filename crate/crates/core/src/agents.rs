//! Learning agents. One agent instance serves every cell and learns from the
//! transitions the shield actually executed.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{argmax_action, CellState, TiltAction, Transition};
use crate::error::{Error, Result};
use crate::nn::{Mlp, Sample, SgdConfig};
use crate::rng::{stream, stream_rng, Rng as ChaRng};
use crate::shield::{Proposer, ProposerKind};

const STATE_DIM: usize = 4;
const N_ACTIONS: usize = 3;

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    buffer: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.buffer.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.buffer[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }
}

/// Linear decay from `start` to `end` over `decay_episodes` completed episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn at(&self, episodes_completed: usize) -> f64 {
        if self.decay_episodes == 0 {
            return self.end;
        }
        if episodes_completed >= self.decay_episodes {
            return self.end;
        }
        let frac = episodes_completed as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub discount: f64,
    pub replay_capacity: usize,
    pub epsilon: EpsilonSchedule,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            learning_rate: 0.001,
            batch_size: 50,
            discount: 0.0,
            replay_capacity: 10_000,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_episodes: 50,
            },
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        SgdConfig::new(self.learning_rate, self.batch_size)?;
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config("discount", "must lie in [0, 1)"));
        }
        if self.replay_capacity == 0 {
            return Err(Error::config("replay_capacity", "must be >= 1"));
        }
        for (field, v) in [("epsilon_start", self.epsilon.start), ("epsilon_end", self.epsilon.end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    q_net: Mlp,
    replay: ReplayBuffer,
    config: DqnConfig,
    sgd: SgdConfig,
    epsilon: f64,
    episodes_completed: usize,
    rng: ChaRng,
    last_loss: Option<f64>,
}

impl DqnAgent {
    pub fn new(config: DqnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![STATE_DIM];
        dims.extend(&config.hidden);
        dims.push(N_ACTIONS);
        let q_net = Mlp::init_with_rng(&dims, &mut stream_rng(seed, stream::AGENT_INIT, 0))?;
        Ok(Self {
            replay: ReplayBuffer::new(config.replay_capacity),
            sgd: SgdConfig::new(config.learning_rate, config.batch_size)?,
            epsilon: config.epsilon.at(0),
            config,
            q_net,
            episodes_completed: 0,
            rng: stream_rng(seed, stream::AGENT_ACT, 0),
            last_loss: None,
        })
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q_net
    }

    pub fn set_q_net(&mut self, net: Mlp) -> Result<()> {
        if net.input_dim() != STATE_DIM || net.output_dim() != N_ACTIONS {
            return Err(Error::Contract(format!(
                "Q-network must map {STATE_DIM} -> {N_ACTIONS}, got {:?}",
                net.layer_dims()
            )));
        }
        self.q_net = net;
        Ok(())
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn q_values(&self, state: &CellState) -> [f64; N_ACTIONS] {
        let q = self
            .q_net
            .forward(&state.to_input())
            .expect("Q-network input dim is fixed at construction");
        [q[0], q[1], q[2]]
    }

    /// Bootstrapped target for one transition. With a zero discount the
    /// next-state values are never evaluated.
    pub fn target(&self, t: &Transition) -> f64 {
        if self.config.discount == 0.0 {
            t.reward
        } else {
            let next = self.q_values(&t.next_state);
            t.reward + self.config.discount * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    }

    fn train_on_replay(&mut self) -> Result<()> {
        let idx = self.replay.sample_indices(self.config.batch_size, &mut self.rng);
        let rows: Vec<([f64; STATE_DIM], [f64; N_ACTIONS], [bool; N_ACTIONS])> = idx
            .iter()
            .map(|&i| {
                let t = self.replay.get(i);
                let a = t.action.index();
                let mut target = [0.0; N_ACTIONS];
                let mut mask = [false; N_ACTIONS];
                target[a] = self.target(t);
                mask[a] = true;
                (t.state.to_input(), target, mask)
            })
            .collect();
        let batch: Vec<Sample<'_>> = rows
            .iter()
            .map(|(x, y, m)| Sample { input: x, target: y, mask: m })
            .collect();
        self.last_loss = Some(self.q_net.sgd_step(&batch, &self.sgd)?);
        Ok(())
    }
}

impl Proposer for DqnAgent {
    fn kind(&self) -> ProposerKind {
        ProposerKind::Agent
    }

    fn propose(&mut self, state: &CellState, explore: bool) -> TiltAction {
        if explore && self.rng.gen_bool(self.epsilon) {
            *TiltAction::ALL.choose(&mut self.rng).unwrap()
        } else {
            argmax_action(&self.q_values(state))
        }
    }

    fn observe(&mut self, transition: &Transition) -> Result<()> {
        self.replay.push(*transition);
        if self.replay.len() >= self.config.batch_size {
            self.train_on_replay()?;
        }
        Ok(())
    }

    fn end_episode(&mut self) {
        self.episodes_completed += 1;
        self.epsilon = self.config.epsilon.at(self.episodes_completed);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub discount: f64,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![32],
            critic_hidden: vec![32],
            learning_rate: 0.03,
            discount: 0.0,
        }
    }
}

/// One-step advantage actor-critic with a softmax policy over the three actions.
#[derive(Debug, Clone)]
pub struct AcAgent {
    actor: Mlp,
    critic: Mlp,
    config: AcConfig,
    sgd: SgdConfig,
    rng: ChaRng,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl AcAgent {
    pub fn new(config: AcConfig, seed: u64) -> Result<Self> {
        let sgd = SgdConfig::new(config.learning_rate, 1)?;
        if !(0.0..1.0).contains(&config.discount) {
            return Err(Error::config("discount", "must lie in [0, 1)"));
        }
        let mut init_rng = stream_rng(seed, stream::AGENT_INIT, 0);
        let mut actor_dims = vec![STATE_DIM];
        actor_dims.extend(&config.actor_hidden);
        actor_dims.push(N_ACTIONS);
        let mut critic_dims = vec![STATE_DIM];
        critic_dims.extend(&config.critic_hidden);
        critic_dims.push(1);
        Ok(Self {
            actor: Mlp::init_with_rng(&actor_dims, &mut init_rng)?,
            critic: Mlp::init_with_rng(&critic_dims, &mut init_rng)?,
            config,
            sgd,
            rng: stream_rng(seed, stream::AGENT_ACT, 0),
        })
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn set_actor(&mut self, net: Mlp) -> Result<()> {
        if net.input_dim() != STATE_DIM || net.output_dim() != N_ACTIONS {
            return Err(Error::Contract("actor must map 4 -> 3".into()));
        }
        self.actor = net;
        Ok(())
    }

    pub fn policy(&self, state: &CellState) -> Vec<f64> {
        softmax(&self.logits(state))
    }

    fn logits(&self, state: &CellState) -> Vec<f64> {
        self.actor
            .forward(&state.to_input())
            .expect("actor input dim is fixed at construction")
    }

    pub fn value(&self, state: &CellState) -> f64 {
        self.critic
            .forward(&state.to_input())
            .expect("critic input dim is fixed at construction")[0]
    }
}

impl Proposer for AcAgent {
    fn kind(&self) -> ProposerKind {
        ProposerKind::Agent
    }

    fn propose(&mut self, state: &CellState, explore: bool) -> TiltAction {
        let probs = self.policy(state);
        if explore {
            let u: f64 = self.rng.gen();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return TiltAction::from_index(i);
                }
            }
            TiltAction::from_index(N_ACTIONS - 1)
        } else {
            argmax_action(&probs)
        }
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        let x = t.state.to_input();
        let v = self.value(&t.state);
        let v_target = if self.config.discount == 0.0 {
            t.reward
        } else {
            t.reward + self.config.discount * self.value(&t.next_state)
        };
        let advantage = v_target - v;
        self.critic.sgd_step(
            &[Sample { input: &x, target: &[v_target], mask: &[true] }],
            &self.sgd,
        )?;

        // A regression step towards z + (n/2) A (onehot - pi) moves the logits
        // by exactly lr * A * d log pi(a|s) / dz.
        let z = self.logits(&t.state);
        let pi = softmax(&z);
        let a = t.action.index();
        let half_n = N_ACTIONS as f64 / 2.0;
        let target: Vec<f64> = (0..N_ACTIONS)
            .map(|j| {
                let onehot = if j == a { 1.0 } else { 0.0 };
                z[j] + half_n * advantage * (onehot - pi[j])
            })
            .collect();
        self.actor.sgd_step(
            &[Sample { input: &x, target: &target, mask: &[true; N_ACTIONS] }],
            &self.sgd,
        )?;
        Ok(())
    }
}
