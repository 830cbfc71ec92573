//! Safe baselines: a stateless threshold rule and a greedy policy over an
//! offline-trained Q-network.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::env::{argmax_action, CellState, TiltAction, Transition};
use crate::error::{Error, Result};
use crate::nn::{Mlp, Sample, SgdConfig};
use crate::rng::{stream, stream_rng};
use crate::shield::{Proposer, ProposerKind};

/// Legacy-style tilt rule.
///
/// A coverage problem is answered by uptilting, an interference problem by
/// downtilting, coverage first. Capacity never triggers a tilt change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleBasedPolicy {
    pub cov_high: f64,
    pub qual_high: f64,
}

impl Default for RuleBasedPolicy {
    fn default() -> Self {
        Self {
            cov_high: 0.3,
            qual_high: 0.3,
        }
    }
}

impl RuleBasedPolicy {
    pub fn new(cov_high: f64, qual_high: f64) -> Result<Self> {
        for (field, v) in [("rule_cov_high", cov_high), ("rule_qual_high", qual_high)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(field, format!("must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self { cov_high, qual_high })
    }

    pub fn propose(&self, state: &CellState) -> TiltAction {
        if state.cov > self.cov_high {
            TiltAction::Up
        } else if state.qual > self.qual_high {
            TiltAction::Down
        } else {
            TiltAction::Hold
        }
    }
}

impl Proposer for RuleBasedPolicy {
    fn kind(&self) -> ProposerKind {
        ProposerKind::Baseline
    }

    fn propose(&mut self, state: &CellState, _explore: bool) -> TiltAction {
        RuleBasedPolicy::propose(self, state)
    }
}

/// Greedy policy of a frozen Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBasedPolicy {
    q_net: Mlp,
}

impl ModelBasedPolicy {
    pub fn new(q_net: Mlp) -> Result<Self> {
        if q_net.input_dim() != 4 || q_net.output_dim() != 3 {
            return Err(Error::Contract(format!(
                "model baseline needs a 4 -> 3 network, got {:?}",
                q_net.layer_dims()
            )));
        }
        Ok(Self { q_net })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Mlp::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.q_net.save(path)
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q_net
    }

    pub fn q_values(&self, state: &CellState) -> Vec<f64> {
        self.q_net
            .forward(&state.to_input())
            .expect("input dim checked at construction")
    }

    pub fn propose(&self, state: &CellState) -> TiltAction {
        argmax_action(&self.q_values(state))
    }
}

impl Proposer for ModelBasedPolicy {
    fn kind(&self) -> ProposerKind {
        ProposerKind::Baseline
    }

    fn propose(&mut self, state: &CellState, _explore: bool) -> TiltAction {
        ModelBasedPolicy::propose(self, state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineTrainingConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for OfflineTrainingConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            epochs: 20,
            batch_size: 50,
            learning_rate: 0.01,
        }
    }
}

/// Fit `Q(s, a) -> r` on logged transitions (zero discount) and freeze the
/// greedy policy.
pub fn train_offline_baseline(
    dataset: &[Transition],
    seed: u64,
    config: &OfflineTrainingConfig,
) -> Result<ModelBasedPolicy> {
    if dataset.is_empty() {
        return Err(Error::Contract("offline baseline needs a non-empty dataset".into()));
    }
    if config.epochs == 0 {
        return Err(Error::config("epochs", "must be >= 1"));
    }
    let sgd = SgdConfig::new(config.learning_rate, config.batch_size)?;
    let mut dims = vec![4];
    dims.extend(&config.hidden);
    dims.push(3);
    let mut net = Mlp::init_with_rng(&dims, &mut stream_rng(seed, stream::AGENT_INIT, 0))?;
    let mut rng = stream_rng(seed, stream::TRAINING, 0);

    let rows: Vec<([f64; 4], [f64; 3], [bool; 3])> = dataset
        .iter()
        .map(|t| {
            let a = t.action.index();
            let mut target = [0.0; 3];
            let mut mask = [false; 3];
            target[a] = t.reward;
            mask[a] = true;
            (t.state.to_input(), target, mask)
        })
        .collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(sgd.batch_size) {
            let batch: Vec<Sample<'_>> = chunk
                .iter()
                .map(|&i| Sample {
                    input: &rows[i].0,
                    target: &rows[i].1,
                    mask: &rows[i].2,
                })
                .collect();
            net.sgd_step(&batch, &sgd)?;
        }
    }
    ModelBasedPolicy::new(net)
}
