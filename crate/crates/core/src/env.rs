//! Episodic MDP over the radio simulator.
//!
//! Every cell is an independent decision point observing
//! `[tilt_norm, cov, cap, qual]` and choosing a one-degree tilt change. All
//! cells act synchronously, then KPIs are recomputed once for the joint tilt
//! vector. Tilts live on the integer grid inside `[min_tilt, max_tilt]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use crate::sim::{CellKpis, Simulator, TiltVector};

/// Per-cell reward `-ln(1 + cov² + cap² + qual²)`, in `[-ln 4, 0]`.
pub fn reward(kpis: &CellKpis) -> Result<f64> {
    kpis.check()?;
    Ok(-(1.0 + kpis.squared_risk()).ln())
}

/// Normalised per-cell observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub tilt_norm: f64,
    pub cov: f64,
    pub cap: f64,
    pub qual: f64,
}

impl CellState {
    pub fn new(tilt_deg: f64, kpis: CellKpis, min_tilt: f64, max_tilt: f64) -> Self {
        let span = max_tilt - min_tilt;
        let tilt_norm = if span > 0.0 {
            ((tilt_deg - min_tilt) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Self {
            tilt_norm,
            cov: kpis.cov,
            cap: kpis.cap,
            qual: kpis.qual,
        }
    }

    pub fn kpis(&self) -> CellKpis {
        CellKpis {
            cov: self.cov,
            cap: self.cap,
            qual: self.qual,
        }
    }

    pub fn tilt_deg(&self, min_tilt: f64, max_tilt: f64) -> f64 {
        min_tilt + self.tilt_norm * (max_tilt - min_tilt)
    }

    pub fn to_input(&self) -> [f64; 4] {
        [self.tilt_norm, self.cov, self.cap, self.qual]
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tilt_norm) {
            return Err(Error::Domain(format!(
                "tilt_norm={} outside [0, 1]",
                self.tilt_norm
            )));
        }
        self.kpis().check()
    }
}

/// Change of downtilt in degrees. Negative values uptilt the beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TiltAction {
    Up,
    Hold,
    Down,
}

impl TiltAction {
    /// All actions in ascending delta order; index `i` of a Q-vector is `ALL[i]`.
    pub const ALL: [TiltAction; 3] = [TiltAction::Up, TiltAction::Hold, TiltAction::Down];

    pub fn from_delta(delta: i32) -> Result<Self> {
        match delta {
            -1 => Ok(TiltAction::Up),
            0 => Ok(TiltAction::Hold),
            1 => Ok(TiltAction::Down),
            d => Err(Error::Domain(format!("tilt delta {d} not in {{-1, 0, 1}}"))),
        }
    }

    pub fn delta(self) -> i32 {
        match self {
            TiltAction::Up => -1,
            TiltAction::Hold => 0,
            TiltAction::Down => 1,
        }
    }

    pub fn index(self) -> usize {
        (self.delta() + 1) as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Index of the largest value; ties go to the lowest index, i.e. the smallest
/// tilt delta.
pub fn argmax_action(values: &[f64]) -> TiltAction {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    TiltAction::from_index(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub cell: usize,
    pub state: CellState,
    pub action: TiltAction,
    pub reward: f64,
    pub next_state: CellState,
    pub episode: usize,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub episode_length: usize,
    pub n_episodes: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            episode_length: 20,
            n_episodes: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub states: Vec<CellState>,
    pub rewards: Vec<f64>,
    pub transitions: Vec<Transition>,
}

impl StepOutcome {
    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

pub struct Env {
    sim: Simulator,
    episode_length: usize,
    tilts: Vec<f64>,
    kpis: Vec<CellKpis>,
    /// 1-based index of the current episode; 0 before the first reset.
    episode: usize,
    step: usize,
}

impl Env {
    pub fn new(sim: Simulator, episode: EpisodeConfig) -> Result<Self> {
        if episode.episode_length == 0 {
            return Err(Error::config("episode_length", "must be >= 1"));
        }
        let n = sim.n_cells();
        Ok(Self {
            sim,
            episode_length: episode.episode_length,
            tilts: Vec::with_capacity(n),
            kpis: Vec::with_capacity(n),
            episode: 0,
            step: 0,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.sim.n_cells()
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    pub fn tilts(&self) -> &[f64] {
        &self.tilts
    }

    pub fn kpis(&self) -> &[CellKpis] {
        &self.kpis
    }

    pub fn episode_done(&self) -> bool {
        self.episode == 0 || self.step >= self.episode_length
    }

    /// Draw every cell's tilt uniformly from the integer grid and start a new episode.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<CellState>> {
        let cfg = self.sim.config();
        let lo = cfg.min_tilt_deg.ceil() as i64;
        let hi = cfg.max_tilt_deg.floor() as i64;
        if lo > hi {
            return Err(Error::config(
                "min_tilt_deg",
                "tilt range contains no integer degree",
            ));
        }
        let mut rng = stream_rng(seed, stream::RESET, 0);
        let tilts: Vec<f64> = (0..self.n_cells())
            .map(|_| rng.gen_range(lo..=hi) as f64)
            .collect();
        self.start_episode(tilts)
    }

    /// Start a new episode from explicit tilts.
    pub fn reset_to(&mut self, tilts: TiltVector) -> Result<Vec<CellState>> {
        self.start_episode(tilts.as_slice().to_vec())
    }

    fn start_episode(&mut self, tilts: Vec<f64>) -> Result<Vec<CellState>> {
        let tv = TiltVector::new(tilts, self.sim.config())?;
        self.kpis = self.sim.kpis(&tv)?;
        self.tilts = tv.as_slice().to_vec();
        self.episode += 1;
        self.step = 0;
        Ok(self.states())
    }

    pub fn states(&self) -> Vec<CellState> {
        let cfg = self.sim.config();
        self.tilts
            .iter()
            .zip(&self.kpis)
            .map(|(&t, &k)| CellState::new(t, k, cfg.min_tilt_deg, cfg.max_tilt_deg))
            .collect()
    }

    pub fn step(&mut self, actions: &[TiltAction]) -> Result<StepOutcome> {
        if self.episode == 0 {
            return Err(Error::Contract("step called before reset".into()));
        }
        if self.step >= self.episode_length {
            return Err(Error::Contract(format!(
                "episode {} exhausted after {} steps",
                self.episode, self.episode_length
            )));
        }
        if actions.len() != self.n_cells() {
            return Err(Error::Contract(format!(
                "{} actions for {} cells",
                actions.len(),
                self.n_cells()
            )));
        }
        let cfg = self.sim.config();
        let (lo, hi) = (cfg.min_tilt_deg, cfg.max_tilt_deg);
        let before = self.states();
        let next_tilts: Vec<f64> = self
            .tilts
            .iter()
            .zip(actions)
            .map(|(&t, a)| (t + a.delta() as f64).clamp(lo, hi))
            .collect();
        let tv = TiltVector::new(next_tilts, cfg)?;
        self.kpis = self.sim.kpis(&tv)?;
        self.tilts = tv.as_slice().to_vec();
        let after = self.states();

        let rewards = self.kpis.iter().map(reward).collect::<Result<Vec<_>>>()?;
        let transitions = (0..self.n_cells())
            .map(|c| Transition {
                cell: c,
                state: before[c],
                action: actions[c],
                reward: rewards[c],
                next_state: after[c],
                episode: self.episode,
                step: self.step,
            })
            .collect();
        self.step += 1;
        Ok(StepOutcome {
            states: after,
            rewards,
            transitions,
        })
    }
}
