//! The safety shield and its two decision logics.
//!
//! The [`Shield`] owns the environment. Registered proposers (agents and safe
//! baselines) only ever see cell states and the transitions the shield chose
//! to execute; they have no handle on the environment itself.
//!
//! Two logics pick the executed action for each cell:
//!
//! * the state-predictor logic scores every proposed action with a learned
//!   `(cov, cap, qual, delta) -> (cov', cap', qual')` regressor and executes
//!   the one with the smallest predicted `cov'² + cap'² + qual'²`;
//! * the k-shield logic draws `p ~ Bernoulli(k)` and, when `p = 1`, runs
//!   baseline `i ~ Categorical(b)`, otherwise the agent. `k` shrinks by `d`
//!   whenever the mean reward of the last `w` episodes is at least the mean
//!   of the `w` before.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{CellState, Env, StepOutcome, TiltAction, Transition};
use crate::error::{Error, Result};
use crate::nn::{Mlp, Sample, SgdConfig};
use crate::rng::{stream, stream_rng, Rng as ChaRng};
use crate::sim::CellKpis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProposerKind {
    Agent,
    Baseline,
}

/// Anything that can suggest a tilt action to the shield.
pub trait Proposer: Send {
    fn kind(&self) -> ProposerKind;

    fn propose(&mut self, state: &CellState, explore: bool) -> TiltAction;

    /// Feedback carrying the action the shield executed.
    fn observe(&mut self, _transition: &Transition) -> Result<()> {
        Ok(())
    }

    fn end_episode(&mut self) {}
}

impl<P: Proposer + ?Sized> Proposer for Box<P> {
    fn kind(&self) -> ProposerKind {
        (**self).kind()
    }
    fn propose(&mut self, state: &CellState, explore: bool) -> TiltAction {
        (**self).propose(state, explore)
    }
    fn observe(&mut self, transition: &Transition) -> Result<()> {
        (**self).observe(transition)
    }
    fn end_episode(&mut self) {
        (**self).end_episode()
    }
}

/// Registration index of a proposer; lower ids win predictor ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub source: SourceId,
    pub action: TiltAction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    /// Predicted next KPIs for every distinct proposed action, in first-proposed order.
    Predictor { predicted: Vec<(TiltAction, CellKpis)> },
    KShield { k: f64, p: bool, baseline: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShieldDecision {
    pub executed: TiltAction,
    pub source: SourceId,
    pub diagnostics: Diagnostics,
}

impl ShieldDecision {
    /// Predicted KPIs of the executed action, when the predictor logic decided.
    pub fn predicted_kpis(&self) -> Option<CellKpis> {
        match &self.diagnostics {
            Diagnostics::Predictor { predicted } => predicted
                .iter()
                .find(|(a, _)| *a == self.executed)
                .map(|(_, k)| *k),
            Diagnostics::KShield { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// State predictor
// ---------------------------------------------------------------------------

/// `(cov, cap, qual, delta) -> (cov', cap', qual')` regressor.
///
/// The network output is the KPI change; [`StatePredictor::predict`] adds it
/// to the current KPIs before clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePredictor {
    net: Mlp,
}

/// One supervised example: KPIs, the executed action, and the KPIs after it.
pub type PredictorSample = (CellKpis, TiltAction, CellKpis);

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTrainingConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the dataset used for fitting; the rest is held out.
    pub train_fraction: f64,
}

impl Default for PredictorTrainingConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 30,
            batch_size: 50,
            learning_rate: 0.001,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorReport {
    pub n_train: usize,
    pub n_heldout: usize,
    /// Held-out RMSE per KPI (cov, cap, qual).
    pub heldout_rmse: [f64; 3],
}

impl PredictorReport {
    pub fn max_rmse(&self) -> f64 {
        self.heldout_rmse.iter().copied().fold(0.0, f64::max)
    }
}

fn predictor_input(kpis: &CellKpis, action: TiltAction) -> [f64; 4] {
    [kpis.cov, kpis.cap, kpis.qual, action.delta() as f64]
}

impl StatePredictor {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.input_dim() != 4 || net.output_dim() != 3 {
            return Err(Error::Contract(format!(
                "state predictor needs a 4 -> 3 network, got {:?}",
                net.layer_dims()
            )));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Mlp::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.net.save(path)
    }

    /// Predicted next KPIs, clamped to `[0, 1]`.
    pub fn predict(&self, kpis: &CellKpis, action: TiltAction) -> CellKpis {
        let y = self
            .net
            .forward(&predictor_input(kpis, action))
            .expect("input dim checked at construction");
        CellKpis {
            cov: (kpis.cov + y[0]).clamp(0.0, 1.0),
            cap: (kpis.cap + y[1]).clamp(0.0, 1.0),
            qual: (kpis.qual + y[2]).clamp(0.0, 1.0),
        }
    }

    /// Per-KPI RMSE of the clamped predictions over `data`.
    pub fn rmse(&self, data: &[PredictorSample]) -> [f64; 3] {
        if data.is_empty() {
            return [0.0; 3];
        }
        let mut sse = [0.0; 3];
        for (k, a, next) in data {
            let p = self.predict(k, *a).as_array();
            for (j, t) in next.as_array().iter().enumerate() {
                sse[j] += (p[j] - t).powi(2);
            }
        }
        sse.map(|s| (s / data.len() as f64).sqrt())
    }

    /// Fit the regressor by minibatch SGD on a shuffled train split and report
    /// the held-out error.
    pub fn train(
        dataset: &[PredictorSample],
        seed: u64,
        config: &PredictorTrainingConfig,
    ) -> Result<(Self, PredictorReport)> {
        if dataset.is_empty() {
            return Err(Error::Contract("state predictor needs a non-empty dataset".into()));
        }
        if !(config.train_fraction > 0.0 && config.train_fraction <= 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1]"));
        }
        let sgd = SgdConfig::new(config.learning_rate, config.batch_size)?;
        let mut dims = vec![4];
        dims.extend(&config.hidden);
        dims.push(3);
        // Zero output layer: training starts from the persistence forecast.
        let init = Mlp::init_with_rng(&dims, &mut stream_rng(seed, stream::AGENT_INIT, 1))?;
        let mut weights = init.weights().to_vec();
        weights.last_mut().expect("at least one layer").fill(0.0);
        let mut net = Mlp::from_parts(dims, weights, init.biases().to_vec())?;
        let mut rng = stream_rng(seed, stream::TRAINING, 1);

        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        let n_train = ((dataset.len() as f64 * config.train_fraction).round() as usize)
            .clamp(1, dataset.len());
        let (train_idx, heldout_idx) = order.split_at(n_train);

        let rows: Vec<([f64; 4], [f64; 3])> = dataset
            .iter()
            .map(|(k, a, next)| {
                let (now, next) = (k.as_array(), next.as_array());
                (predictor_input(k, *a), [next[0] - now[0], next[1] - now[1], next[2] - now[2]])
            })
            .collect();
        let mask = [true; 3];
        let mut epoch_order = train_idx.to_vec();
        for _ in 0..config.epochs {
            epoch_order.shuffle(&mut rng);
            for chunk in epoch_order.chunks(sgd.batch_size) {
                let batch: Vec<Sample<'_>> = chunk
                    .iter()
                    .map(|&i| Sample {
                        input: &rows[i].0,
                        target: &rows[i].1,
                        mask: &mask,
                    })
                    .collect();
                net.sgd_step(&batch, &sgd)?;
            }
        }
        let predictor = Self::new(net)?;
        let heldout: Vec<PredictorSample> = heldout_idx.iter().map(|&i| dataset[i]).collect();
        let eval_set: Vec<PredictorSample> = if heldout.is_empty() {
            train_idx.iter().map(|&i| dataset[i]).collect()
        } else {
            heldout
        };
        let report = PredictorReport {
            n_train,
            n_heldout: heldout_idx.len(),
            heldout_rmse: predictor.rmse(&eval_set),
        };
        Ok((predictor, report))
    }
}

/// Choose the proposal whose predicted next KPIs have the smallest squared
/// risk. Proposals must be in registration order; the earliest wins ties.
pub fn predictor_decide(
    predictor: &StatePredictor,
    state: &CellState,
    proposals: &[Proposal],
) -> Result<ShieldDecision> {
    if proposals.is_empty() {
        return Err(Error::Contract("predictor logic needs at least one proposal".into()));
    }
    let kpis = state.kpis();
    let mut predicted: Vec<(TiltAction, CellKpis)> = Vec::with_capacity(3);
    let mut best: Option<(f64, Proposal)> = None;
    for p in proposals {
        let next = match predicted.iter().find(|(a, _)| *a == p.action) {
            Some((_, k)) => *k,
            None => {
                let k = predictor.predict(&kpis, p.action);
                predicted.push((p.action, k));
                k
            }
        };
        let score = next.squared_risk();
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, *p));
        }
    }
    let (_, chosen) = best.expect("non-empty proposals");
    Ok(ShieldDecision {
        executed: chosen.action,
        source: chosen.source,
        diagnostics: Diagnostics::Predictor { predicted },
    })
}

// ---------------------------------------------------------------------------
// k-shield
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct KShieldState {
    k: f64,
    d: f64,
    w: usize,
    b: Vec<f64>,
    recent_rewards: VecDeque<f64>,
    episodes_completed: usize,
}

impl KShieldState {
    pub fn new(k: f64, d: f64, w: usize, b: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::config("k_initial", format!("must lie in [0, 1], got {k}")));
        }
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::config("d", format!("must lie in (0, 1), got {d}")));
        }
        if w == 0 {
            return Err(Error::config("w", "must be >= 1"));
        }
        if b.is_empty() || b.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::config("b", "weights must be non-negative and finite"));
        }
        if (b.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("b", "weights must sum to 1"));
        }
        Ok(Self {
            k,
            d,
            w,
            b,
            recent_rewards: VecDeque::with_capacity(2 * w),
            episodes_completed: 0,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }

    pub fn n_baselines(&self) -> usize {
        self.b.len()
    }

    pub fn episodes_completed(&self) -> usize {
        self.episodes_completed
    }

    /// Mix the agent with the baselines for one cell.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        agent: Proposal,
        baselines: &[Proposal],
        rng: &mut R,
    ) -> Result<ShieldDecision> {
        if baselines.len() != self.b.len() {
            return Err(Error::Contract(format!(
                "{} baseline proposals for {} baseline weights",
                baselines.len(),
                self.b.len()
            )));
        }
        let p = rng.gen::<f64>() < self.k;
        if !p {
            return Ok(ShieldDecision {
                executed: agent.action,
                source: agent.source,
                diagnostics: Diagnostics::KShield { k: self.k, p, baseline: None },
            });
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut i = self.b.len() - 1;
        for (j, bj) in self.b.iter().enumerate() {
            acc += bj;
            if u < acc {
                i = j;
                break;
            }
        }
        // Guard against rounding leaving a zero-weight tail selected.
        while self.b[i] == 0.0 && i > 0 {
            i -= 1;
        }
        Ok(ShieldDecision {
            executed: baselines[i].action,
            source: baselines[i].source,
            diagnostics: Diagnostics::KShield { k: self.k, p, baseline: Some(i) },
        })
    }

    /// Record a finished episode's mean reward and apply the windowed update.
    ///
    /// Updates happen after every `w`-th episode once `2w` episodes exist:
    /// `k` drops by `d` (floored at 0) when the mean of episodes
    /// `[e-w+1, e]` is at least the mean of `[e-2w+1, e-w]`.
    pub fn update(&mut self, episode_mean_reward: f64) -> f64 {
        if self.recent_rewards.len() == 2 * self.w {
            self.recent_rewards.pop_front();
        }
        self.recent_rewards.push_back(episode_mean_reward);
        self.episodes_completed += 1;
        let e = self.episodes_completed;
        if e.is_multiple_of(self.w) && e >= 2 * self.w {
            let w = self.w as f64;
            let older: f64 = self.recent_rewards.iter().take(self.w).sum::<f64>() / w;
            let recent: f64 = self.recent_rewards.iter().skip(self.w).sum::<f64>() / w;
            if recent >= older {
                self.k = (self.k - self.d).max(0.0);
            }
        }
        self.k
    }
}

// ---------------------------------------------------------------------------
// Shield
// ---------------------------------------------------------------------------

pub enum ShieldLogic {
    StatePredictor(StatePredictor),
    KShield(KShieldState),
}

struct Registered {
    name: String,
    proposer: Box<dyn Proposer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub episode: usize,
    pub step: usize,
    pub cell: usize,
    pub source: SourceId,
    pub action: TiltAction,
    pub diagnostics: Diagnostics,
}

/// Result of one mediated environment step.
#[derive(Debug, Clone)]
pub struct ShieldStep {
    pub decisions: Vec<ShieldDecision>,
    pub outcome: StepOutcome,
}

pub struct Shield {
    env: Env,
    logic: ShieldLogic,
    proposers: Vec<Registered>,
    rng: ChaRng,
    log: Option<Vec<DecisionRecord>>,
    feedback: bool,
}

impl Shield {
    pub fn new(env: Env, logic: ShieldLogic, seed: u64) -> Self {
        Self {
            env,
            logic,
            proposers: Vec::new(),
            rng: stream_rng(seed, stream::SHIELD, 0),
            log: Some(Vec::new()),
            feedback: true,
        }
    }

    /// Enable or disable broadcasting executed transitions to proposers.
    /// Evaluation episodes run with feedback off.
    pub fn set_feedback(&mut self, on: bool) {
        self.feedback = on;
    }

    /// Stop retaining decision records.
    pub fn without_log(mut self) -> Self {
        self.log = None;
        self
    }

    /// Register a proposer. Baselines must be registered before agents so that
    /// registration order prefers safe sources on ties.
    pub fn register(&mut self, name: impl Into<String>, proposer: Box<dyn Proposer>) -> Result<SourceId> {
        let name = name.into();
        if proposer.kind() == ProposerKind::Baseline
            && self.proposers.iter().any(|r| r.proposer.kind() == ProposerKind::Agent)
        {
            return Err(Error::Contract(format!(
                "baseline `{name}` registered after an agent"
            )));
        }
        if self.proposers.iter().any(|r| r.name == name) {
            return Err(Error::Contract(format!("proposer `{name}` registered twice")));
        }
        self.proposers.push(Registered { name, proposer });
        Ok(SourceId(self.proposers.len() - 1))
    }

    pub fn source_name(&self, id: SourceId) -> &str {
        &self.proposers[id.0].name
    }

    pub fn source_kind(&self, id: SourceId) -> ProposerKind {
        self.proposers[id.0].proposer.kind()
    }

    pub fn n_proposers(&self) -> usize {
        self.proposers.len()
    }

    pub fn logic(&self) -> &ShieldLogic {
        &self.logic
    }

    pub fn k(&self) -> Option<f64> {
        match &self.logic {
            ShieldLogic::KShield(ks) => Some(ks.k()),
            ShieldLogic::StatePredictor(_) => None,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.env.n_cells()
    }

    pub fn states(&self) -> Vec<CellState> {
        self.env.states()
    }

    pub fn kpis(&self) -> &[CellKpis] {
        self.env.kpis()
    }

    pub fn tilts(&self) -> &[f64] {
        self.env.tilts()
    }

    pub fn episode_done(&self) -> bool {
        self.env.episode_done()
    }

    pub fn decision_log(&self) -> &[DecisionRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn reset(&mut self, seed: u64) -> Result<Vec<CellState>> {
        self.env.reset(seed)
    }

    pub fn reset_to(&mut self, tilts: crate::sim::TiltVector) -> Result<Vec<CellState>> {
        self.env.reset_to(tilts)
    }

    fn check_ready(&self) -> Result<()> {
        if self.proposers.is_empty() {
            return Err(Error::Contract("no proposers registered".into()));
        }
        if let ShieldLogic::KShield(ks) = &self.logic {
            let agents = self
                .proposers
                .iter()
                .filter(|r| r.proposer.kind() == ProposerKind::Agent)
                .count();
            let baselines = self.proposers.len() - agents;
            if agents != 1 || baselines != ks.n_baselines() {
                return Err(Error::Contract(format!(
                    "k-shield needs 1 agent and {} baselines, got {agents} and {baselines}",
                    ks.n_baselines()
                )));
            }
        }
        Ok(())
    }

    /// Ask every registered proposer for every cell, then mediate.
    pub fn step(&mut self, explore: bool) -> Result<ShieldStep> {
        self.check_ready()?;
        let states = self.env.states();
        let proposals: Vec<Vec<Proposal>> = states
            .iter()
            .map(|s| {
                self.proposers
                    .iter_mut()
                    .enumerate()
                    .map(|(i, r)| Proposal {
                        source: SourceId(i),
                        action: r.proposer.propose(s, explore),
                    })
                    .collect()
            })
            .collect();
        self.step_with(&proposals)
    }

    /// Mediate explicit per-cell proposals. Every registered proposer must
    /// appear exactly once per cell.
    pub fn step_with(&mut self, proposals: &[Vec<Proposal>]) -> Result<ShieldStep> {
        self.check_ready()?;
        if proposals.len() != self.env.n_cells() {
            return Err(Error::Contract(format!(
                "proposals for {} cells, network has {}",
                proposals.len(),
                self.env.n_cells()
            )));
        }
        let states = self.env.states();
        let mut decisions = Vec::with_capacity(proposals.len());
        for (cell, (state, cell_props)) in states.iter().zip(proposals).enumerate() {
            let mut ordered = cell_props.clone();
            ordered.sort_by_key(|p| p.source);
            let complete = ordered.len() == self.proposers.len()
                && ordered.iter().enumerate().all(|(i, p)| p.source == SourceId(i));
            if !complete {
                return Err(Error::Contract(format!(
                    "cell {cell}: expected one proposal from each of {} proposers",
                    self.proposers.len()
                )));
            }
            let decision = match &self.logic {
                ShieldLogic::StatePredictor(pred) => predictor_decide(pred, state, &ordered)?,
                ShieldLogic::KShield(ks) => {
                    let (agent, baselines): (Vec<Proposal>, Vec<Proposal>) = ordered
                        .iter()
                        .partition(|p| self.proposers[p.source.0].proposer.kind() == ProposerKind::Agent);
                    ks.decide(agent[0], &baselines, &mut self.rng)?
                }
            };
            decisions.push(decision);
        }

        let episode = self.env.episode();
        let step = self.env.step_index();
        let executed: Vec<TiltAction> = decisions.iter().map(|d| d.executed).collect();
        let outcome = self.env.step(&executed)?;
        if self.feedback {
            for t in &outcome.transitions {
                for r in self.proposers.iter_mut() {
                    r.proposer.observe(t)?;
                }
            }
        }
        if let Some(log) = self.log.as_mut() {
            log.extend(decisions.iter().enumerate().map(|(cell, d)| DecisionRecord {
                episode,
                step,
                cell,
                source: d.source,
                action: d.executed,
                diagnostics: d.diagnostics.clone(),
            }));
        }
        Ok(ShieldStep { decisions, outcome })
    }

    /// Close an episode: notify proposers and feed the k-shield update.
    pub fn end_episode(&mut self, episode_mean_reward: f64) {
        for r in self.proposers.iter_mut() {
            r.proposer.end_episode();
        }
        if let ShieldLogic::KShield(ks) = &mut self.logic {
            ks.update(episode_mean_reward);
        }
    }

    pub const DECISION_LOG_HEADER: &'static str =
        "episode,step,cell,source_id,action,k,p,i,predicted_cov,predicted_cap,predicted_qual";

    pub fn decision_log_csv(&self) -> String {
        let mut out = String::from(Self::DECISION_LOG_HEADER);
        out.push('\n');
        for r in self.decision_log() {
            let name = self.source_name(r.source);
            let _ = write!(out, "{},{},{},{},{},", r.episode, r.step, r.cell, name, r.action.delta());
            match &r.diagnostics {
                Diagnostics::KShield { k, p, baseline } => {
                    let i = baseline.map(|i| i.to_string()).unwrap_or_default();
                    let _ = writeln!(out, "{k},{},{i},,,", u8::from(*p));
                }
                Diagnostics::Predictor { predicted } => {
                    let k = predicted
                        .iter()
                        .find(|(a, _)| *a == r.action)
                        .map(|(_, k)| *k)
                        .unwrap_or_default();
                    let _ = writeln!(out, ",,,{},{},{}", k.cov, k.cap, k.qual);
                }
            }
        }
        out
    }

    pub fn write_decision_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.decision_log_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng as ChaRng;
    use rand::SeedableRng;

    fn stub_predictor(cov_by_action: [f64; 3]) -> StatePredictor {
        // Linear residual net: cov' = a + b * delta for any state, with cap'
        // and qual' forced to zero. Fits three collinear points exactly.
        let (lo, mid, hi) = (cov_by_action[0], cov_by_action[1], cov_by_action[2]);
        assert!((mid - (lo + hi) / 2.0).abs() < 1e-12);
        let slope = (hi - lo) / 2.0;
        let w = vec![-1.0, 0.0, 0.0, slope, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0];
        StatePredictor::new(Mlp::from_parts(vec![4, 3], vec![w], vec![vec![mid, 0.0, 0.0]]).unwrap())
            .unwrap()
    }

    fn state() -> CellState {
        CellState { tilt_norm: 0.5, cov: 0.2, cap: 0.5, qual: 0.1 }
    }

    #[test]
    fn predictor_picks_forced_argmin() {
        let pred = stub_predictor([0.1, 0.3, 0.5]);
        let props = [
            Proposal { source: SourceId(0), action: TiltAction::Hold },
            Proposal { source: SourceId(1), action: TiltAction::Down },
            Proposal { source: SourceId(2), action: TiltAction::Up },
        ];
        let d = predictor_decide(&pred, &state(), &props).unwrap();
        assert_eq!(d.executed, TiltAction::Up);
        assert_eq!(d.source, SourceId(2));
        match &d.diagnostics {
            Diagnostics::Predictor { predicted } => assert_eq!(predicted.len(), 3),
            _ => panic!(),
        }
        assert!((d.predicted_kpis().unwrap().cov - 0.1).abs() < 1e-12);
    }

    #[test]
    fn predictor_ties_go_to_earliest_registration() {
        let pred = stub_predictor([0.1, 0.3, 0.5]);
        let props = [
            Proposal { source: SourceId(0), action: TiltAction::Up },
            Proposal { source: SourceId(1), action: TiltAction::Up },
        ];
        assert_eq!(predictor_decide(&pred, &state(), &props).unwrap().source, SourceId(0));
        assert!(matches!(predictor_decide(&pred, &state(), &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn kshield_degenerate_k() {
        let mut rng = ChaRng::seed_from_u64(0);
        let agent = Proposal { source: SourceId(1), action: TiltAction::Down };
        let base = [Proposal { source: SourceId(0), action: TiltAction::Up }];
        let always = KShieldState::new(1.0, 0.1, 2, vec![1.0]).unwrap();
        let never = KShieldState::new(0.0, 0.1, 2, vec![1.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(always.decide(agent, &base, &mut rng).unwrap().source, SourceId(0));
            assert_eq!(never.decide(agent, &base, &mut rng).unwrap().source, SourceId(1));
        }
        assert!(matches!(always.decide(agent, &[], &mut rng), Err(Error::Contract(_))));
    }

    #[test]
    fn kshield_update_table() {
        let mut ks = KShieldState::new(1.0, 0.1, 2, vec![1.0]).unwrap();
        for r in [-1.0, -1.0, -0.5] {
            assert_eq!(ks.update(r), 1.0);
        }
        assert!((ks.update(-0.5) - 0.9).abs() < 1e-12);

        let mut ks = KShieldState::new(0.05, 0.1, 2, vec![1.0]).unwrap();
        for r in [-1.0, -1.0, -0.5, -0.5] {
            ks.update(r);
        }
        assert_eq!(ks.k(), 0.0);

        let mut ks = KShieldState::new(0.9, 0.1, 2, vec![1.0]).unwrap();
        for r in [-0.5, -0.5, -1.0, -1.0] {
            ks.update(r);
        }
        assert_eq!(ks.k(), 0.9);
    }

    #[test]
    fn kshield_updates_only_on_window_boundaries() {
        let mut ks = KShieldState::new(1.0, 0.1, 2, vec![1.0]).unwrap();
        // Steadily improving rewards: updates fire at episodes 4, 6, 8.
        let ks_after: Vec<f64> = (1..=9).map(|e| ks.update(-1.0 + 0.05 * e as f64)).collect();
        let expected = [1.0, 1.0, 1.0, 0.9, 0.9, 0.8, 0.8, 0.7, 0.7];
        for (a, b) in ks_after.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{ks_after:?}");
        }
    }

    #[test]
    fn kshield_config_validation() {
        assert!(KShieldState::new(1.1, 0.1, 2, vec![1.0]).is_err());
        assert!(KShieldState::new(0.9, 1.0, 2, vec![1.0]).is_err());
        assert!(KShieldState::new(0.9, 0.1, 0, vec![1.0]).is_err());
        assert!(KShieldState::new(0.9, 0.1, 2, vec![0.5, 0.4]).is_err());
        assert!(KShieldState::new(0.9, 0.1, 2, vec![]).is_err());
    }
}
