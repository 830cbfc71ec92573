//! Multi-seed experiment runs.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::agents::{AcAgent, DqnAgent};
use crate::baselines::ModelBasedPolicy;
use crate::env::{CellState, Env, EpisodeConfig, StepOutcome, TiltAction};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::shield::{KShieldState, Proposer, ProposerKind, Shield, ShieldLogic, StatePredictor};
use crate::sim::Simulator;

use super::config::{AgentKind, BaselineSpec, ExperimentConfig, Scenario};
use super::metrics::{aggregate, aggregate_csv, write_seed_csv, AggregateRow, EpisodeMetrics};

/// Offset separating evaluation reset seeds from training reset seeds.
const EVAL_EPISODE_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub enum SeedStatus {
    Completed,
    /// Training diverged (non-finite loss or gradient); the seed is excluded
    /// from aggregation.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub status: SeedStatus,
    pub train: Vec<EpisodeMetrics>,
    pub eval: Vec<EpisodeMetrics>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub seeds: Vec<SeedResult>,
    pub aggregate: Vec<AggregateRow>,
}

impl RunSummary {
    pub fn completed(&self) -> impl Iterator<Item = &SeedResult> {
        self.seeds.iter().filter(|s| s.status == SeedStatus::Completed)
    }
}

/// Shared, read-only inputs built once per run.
struct Resources {
    simulator: Simulator,
    models: Vec<Option<ModelBasedPolicy>>,
    predictor: Option<StatePredictor>,
}

impl Resources {
    fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let simulator = Simulator::from_config(&cfg.sim)?;
        let models = cfg
            .baselines
            .iter()
            .map(|b| match b {
                BaselineSpec::Rule => Ok(None),
                BaselineSpec::Model(p) => ModelBasedPolicy::load(p).map(Some),
            })
            .collect::<Result<Vec<_>>>()?;
        let predictor = cfg.predictor.as_ref().map(StatePredictor::load).transpose()?;
        Ok(Self { simulator, models, predictor })
    }
}

fn make_agent(cfg: &ExperimentConfig, kind: AgentKind, seed: u64) -> Result<Box<dyn Proposer>> {
    Ok(match kind {
        AgentKind::Dqn => Box::new(DqnAgent::new(cfg.dqn.clone(), seed)?),
        AgentKind::Ac => Box::new(AcAgent::new(cfg.ac.clone(), seed)?),
    })
}

fn make_baseline(cfg: &ExperimentConfig, res: &Resources, i: usize) -> Box<dyn Proposer> {
    match &res.models[i] {
        Some(m) => Box::new(m.clone()),
        None => Box::new(cfg.rule),
    }
}

/// Either a single proposer acting directly on the environment or a shield.
#[allow(clippy::large_enum_variant)]
enum Driver {
    Direct { env: Env, proposer: Box<dyn Proposer> },
    Shielded(Box<Shield>),
}

impl Driver {
    fn reset(&mut self, seed: u64) -> Result<()> {
        match self {
            Driver::Direct { env, .. } => env.reset(seed).map(|_| ()),
            Driver::Shielded(s) => s.reset(seed).map(|_| ()),
        }
    }

    fn done(&self) -> bool {
        match self {
            Driver::Direct { env, .. } => env.episode_done(),
            Driver::Shielded(s) => s.episode_done(),
        }
    }

    fn k(&self) -> Option<f64> {
        match self {
            Driver::Direct { .. } => None,
            Driver::Shielded(s) => s.k(),
        }
    }

    /// One step; returns the outcome and the number of agent-sourced actions.
    fn step(&mut self, learn: bool) -> Result<(StepOutcome, usize)> {
        match self {
            Driver::Direct { env, proposer } => {
                let states: Vec<CellState> = env.states();
                let actions: Vec<TiltAction> =
                    states.iter().map(|s| proposer.propose(s, learn)).collect();
                let outcome = env.step(&actions)?;
                if learn {
                    for t in &outcome.transitions {
                        proposer.observe(t)?;
                    }
                }
                let n_agent = if proposer.kind() == ProposerKind::Agent { actions.len() } else { 0 };
                Ok((outcome, n_agent))
            }
            Driver::Shielded(shield) => {
                shield.set_feedback(learn);
                let step = shield.step(learn)?;
                let n_agent = step
                    .decisions
                    .iter()
                    .filter(|d| shield.source_kind(d.source) == ProposerKind::Agent)
                    .count();
                Ok((step.outcome, n_agent))
            }
        }
    }

    fn end_episode(&mut self, mean_reward: f64) {
        match self {
            Driver::Direct { proposer, .. } => proposer.end_episode(),
            Driver::Shielded(s) => s.end_episode(mean_reward),
        }
    }
}

fn build_driver(cfg: &ExperimentConfig, res: &Resources, seed: u64) -> Result<Driver> {
    let env = Env::new(
        res.simulator.clone(),
        EpisodeConfig {
            episode_length: cfg.episode_length,
            n_episodes: cfg.n_train_episodes,
        },
    )?;
    match cfg.scenario {
        Scenario::UnrestrictedDqn | Scenario::UnrestrictedAc => {
            let kind = cfg.agent.expect("validated: unrestricted runs have an agent");
            Ok(Driver::Direct { env, proposer: make_agent(cfg, kind, seed)? })
        }
        Scenario::BaselineOnly => Ok(Driver::Direct { env, proposer: make_baseline(cfg, res, 0) }),
        Scenario::PredictorShield | Scenario::KShield => {
            let logic = match (&cfg.kshield, &res.predictor) {
                (Some(p), _) => ShieldLogic::KShield(KShieldState::new(p.k_initial, p.d, p.w, p.b.clone())?),
                (None, Some(pred)) => ShieldLogic::StatePredictor(pred.clone()),
                (None, None) => unreachable!("validated: shielded runs have a logic"),
            };
            let mut shield = Shield::new(env, logic, seed);
            if !cfg.decision_log {
                shield = shield.without_log();
            }
            for (i, b) in cfg.baselines.iter().enumerate() {
                shield.register(b.name(i), make_baseline(cfg, res, i))?;
            }
            let kind = cfg.agent.expect("validated: shielded runs have an agent");
            shield.register(kind.name(), make_agent(cfg, kind, seed)?)?;
            Ok(Driver::Shielded(Box::new(shield)))
        }
    }
}

fn run_episode(driver: &mut Driver, episode: usize, reset_seed: u64, learn: bool) -> Result<EpisodeMetrics> {
    driver.reset(reset_seed)?;
    let k = driver.k();
    let (mut reward, mut cov, mut cap, mut qual) = (0.0, 0.0, 0.0, 0.0);
    let (mut steps, mut agent_actions, mut actions) = (0usize, 0usize, 0usize);
    while !driver.done() {
        let (outcome, n_agent) = driver.step(learn)?;
        let n = outcome.states.len() as f64;
        reward += outcome.mean_reward();
        cov += outcome.states.iter().map(|s| s.cov).sum::<f64>() / n;
        cap += outcome.states.iter().map(|s| s.cap).sum::<f64>() / n;
        qual += outcome.states.iter().map(|s| s.qual).sum::<f64>() / n;
        steps += 1;
        agent_actions += n_agent;
        actions += outcome.states.len();
    }
    let s = steps as f64;
    let m = EpisodeMetrics {
        episode,
        reward: reward / s,
        cov: cov / s,
        cap: cap / s,
        qual: qual / s,
        k,
        source_fraction_agent: agent_actions as f64 / actions as f64,
    };
    if learn {
        driver.end_episode(m.reward);
    }
    Ok(m)
}

fn run_seed(cfg: &ExperimentConfig, res: &Resources, seed: u64, dir: &Path) -> Result<SeedResult> {
    let mut driver = build_driver(cfg, res, seed)?;
    let mut train = Vec::with_capacity(cfg.n_train_episodes);
    let mut eval = Vec::with_capacity(cfg.n_eval_episodes);
    let outcome: Result<()> = (|| {
        for e in 1..=cfg.n_train_episodes {
            let reset = derive_seed(seed, stream::RESET, e as u64);
            train.push(run_episode(&mut driver, e, reset, true)?);
        }
        for e in 1..=cfg.n_eval_episodes {
            let reset = derive_seed(seed, stream::RESET, EVAL_EPISODE_OFFSET + e as u64);
            eval.push(run_episode(&mut driver, e, reset, false)?);
        }
        Ok(())
    })();
    let status = match outcome {
        Ok(()) => SeedStatus::Completed,
        Err(Error::Numeric(msg)) => {
            warn!("seed {seed} diverged after {} episodes: {msg}", train.len());
            SeedStatus::Failed(msg)
        }
        Err(e) => return Err(e),
    };

    let seed_dir = dir.join(format!("seed_{seed}"));
    std::fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
    write_seed_csv(seed_dir.join("train.csv"), &train)?;
    write_seed_csv(seed_dir.join("eval.csv"), &eval)?;
    if let Driver::Shielded(shield) = &driver {
        if cfg.decision_log {
            shield.write_decision_log(seed_dir.join("decisions.csv"))?;
        }
    }
    if let SeedStatus::Failed(msg) = &status {
        let p = seed_dir.join("FAILED");
        std::fs::write(&p, msg).map_err(|e| Error::io(&p, e))?;
    }
    Ok(SeedResult { seed, status, train, eval })
}

/// Run every seed of an experiment and write its outputs:
///
/// * `seed_<s>/train.csv`, `seed_<s>/eval.csv` per-episode metrics
/// * `seed_<s>/decisions.csv` for shielded runs with decision logging
/// * `aggregated.csv` smoothed cross-seed training curves
/// * `eval_summary.csv` one row per seed with mean greedy evaluation metrics
/// * `run.log` seed outcomes, including divergence messages
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let res = Resources::load(cfg)?;
    info!(
        "{}: {} seeds x {} episodes on {} cells",
        cfg.scenario.as_str(),
        cfg.seeds.len(),
        cfg.n_train_episodes,
        res.simulator.n_cells()
    );
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, &res, s, dir))
        .collect::<Result<Vec<_>>>()?;

    let survivors: Vec<Vec<EpisodeMetrics>> = seeds
        .iter()
        .filter(|s| s.status == SeedStatus::Completed)
        .map(|s| s.train.clone())
        .collect();
    let mut summary = String::from("seed,status,reward,cov,cap,qual\n");
    for s in &seeds {
        let n = s.eval.len().max(1) as f64;
        let mean = |f: fn(&EpisodeMetrics) -> f64| s.eval.iter().map(f).sum::<f64>() / n;
        let status = match s.status {
            SeedStatus::Completed => "completed",
            SeedStatus::Failed(_) => "failed",
        };
        summary.push_str(&format!(
            "{},{status},{},{},{},{}\n",
            s.seed,
            mean(|m| m.reward),
            mean(|m| m.cov),
            mean(|m| m.cap),
            mean(|m| m.qual)
        ));
    }
    let sum_path = dir.join("eval_summary.csv");
    std::fs::write(&sum_path, summary).map_err(|e| Error::io(&sum_path, e))?;

    let mut log = format!(
        "scenario {}\nepisodes {} x {} steps, {} evaluation episodes\n",
        cfg.scenario.as_str(),
        cfg.n_train_episodes,
        cfg.episode_length,
        cfg.n_eval_episodes
    );
    for s in &seeds {
        match &s.status {
            SeedStatus::Completed => log.push_str(&format!("seed {}: completed\n", s.seed)),
            SeedStatus::Failed(msg) => log.push_str(&format!(
                "seed {}: failed after {} episodes: {msg}\n",
                s.seed,
                s.train.len()
            )),
        }
    }
    let n_failed = seeds.len() - survivors.len();
    if n_failed > 0 {
        log.push_str(&format!(
            "warning: {n_failed} of {} seeds diverged; aggregation covers the remaining {}\n",
            seeds.len(),
            survivors.len()
        ));
    }
    let log_path = dir.join("run.log");
    std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;

    if survivors.is_empty() {
        return Err(Error::Numeric("every seed diverged".into()));
    }
    let rows = aggregate(&survivors, cfg.smoothing_window)?;
    let agg_path = dir.join("aggregated.csv");
    std::fs::write(&agg_path, aggregate_csv(&rows)).map_err(|e| Error::io(&agg_path, e))?;

    Ok(RunSummary { output_dir: dir.clone(), seeds, aggregate: rows })
}
