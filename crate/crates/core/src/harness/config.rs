//! Experiment configuration files.
//!
//! A configuration is a TOML document of flat keys plus an optional `[sim]`
//! table holding [`SimConfig`] overrides. Unknown keys are rejected. Relative
//! paths (model files, `output_dir`) resolve against the file's directory.
//!
//! ```toml
//! scenario = "k-shield"          # unrestricted-dqn | unrestricted-ac | baseline-only
//!                                # | predictor-shield | k-shield
//! agent = "dqn"                  # dqn | ac, for shielded scenarios
//! baselines = ["rule", "model:models/offline.mlp"]
//! b = [0.9, 0.1]                 # k-shield baseline weights, one per baseline
//! d = 0.1
//! w = 2
//! predictor = "models/predictor.mlp"
//! seeds = [1, 2, 3, 4, 5, 6]
//! n_train_episodes = 200
//! output_dir = "runs/k-shield"
//!
//! [sim]
//! n_ues = 2000
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agents::{AcConfig, DqnConfig, EpsilonSchedule};
use crate::baselines::RuleBasedPolicy;
use crate::error::{Error, Result};
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    UnrestrictedDqn,
    UnrestrictedAc,
    BaselineOnly,
    PredictorShield,
    KShield,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "unrestricted-dqn" => Scenario::UnrestrictedDqn,
            "unrestricted-ac" => Scenario::UnrestrictedAc,
            "baseline-only" => Scenario::BaselineOnly,
            "predictor-shield" => Scenario::PredictorShield,
            "k-shield" => Scenario::KShield,
            other => {
                return Err(Error::config(
                    "scenario",
                    format!("unknown scenario `{other}`"),
                ))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::UnrestrictedDqn => "unrestricted-dqn",
            Scenario::UnrestrictedAc => "unrestricted-ac",
            Scenario::BaselineOnly => "baseline-only",
            Scenario::PredictorShield => "predictor-shield",
            Scenario::KShield => "k-shield",
        }
    }

    pub fn is_shielded(self) -> bool {
        matches!(self, Scenario::PredictorShield | Scenario::KShield)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Dqn,
    Ac,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Ac => "ac",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineSpec {
    Rule,
    Model(PathBuf),
}

impl BaselineSpec {
    fn parse(s: &str, base_dir: &Path) -> Result<Self> {
        if s == "rule" {
            Ok(BaselineSpec::Rule)
        } else if let Some(path) = s.strip_prefix("model:") {
            if path.is_empty() {
                return Err(Error::config("baselines", "`model:` needs a file path"));
            }
            Ok(BaselineSpec::Model(base_dir.join(path)))
        } else {
            Err(Error::config(
                "baselines",
                format!("`{s}` is neither `rule` nor `model:<path>`"),
            ))
        }
    }

    /// Proposer name used in decision logs.
    pub fn name(&self, index: usize) -> String {
        match self {
            BaselineSpec::Rule => "rule".to_string(),
            BaselineSpec::Model(_) => format!("model{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KShieldParams {
    pub k_initial: f64,
    pub d: f64,
    pub w: usize,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub agent: Option<AgentKind>,
    pub baselines: Vec<BaselineSpec>,
    pub kshield: Option<KShieldParams>,
    pub predictor: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub n_train_episodes: usize,
    pub episode_length: usize,
    pub n_eval_episodes: usize,
    pub smoothing_window: usize,
    pub decision_log: bool,
    pub rule: RuleBasedPolicy,
    pub dqn: DqnConfig,
    pub ac: AcConfig,
    pub sim: SimConfig,
    pub output_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    agent: Option<String>,
    #[serde(default)]
    baselines: Vec<String>,
    b: Option<Vec<f64>>,
    d: Option<f64>,
    w: Option<usize>,
    k_initial: Option<f64>,
    predictor: Option<String>,
    seeds: Option<Vec<u64>>,
    n_train_episodes: Option<usize>,
    episode_length: Option<usize>,
    n_eval_episodes: Option<usize>,
    smoothing_window: Option<usize>,
    decision_log: Option<bool>,
    rule_cov_high: Option<f64>,
    rule_qual_high: Option<f64>,
    dqn_learning_rate: Option<f64>,
    dqn_batch_size: Option<usize>,
    dqn_discount: Option<f64>,
    replay_capacity: Option<usize>,
    epsilon_start: Option<f64>,
    epsilon_end: Option<f64>,
    epsilon_decay_episodes: Option<usize>,
    ac_learning_rate: Option<f64>,
    ac_discount: Option<f64>,
    output_dir: String,
    sim: Option<SimConfig>,
}

pub const DEFAULT_SEEDS: [u64; 6] = [1, 2, 3, 4, 5, 6];

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            Error::config("<document>", e.message().to_string())
        })?;
        let scenario = Scenario::parse(&raw.scenario)?;
        let agent = match (scenario, raw.agent.as_deref()) {
            (Scenario::UnrestrictedDqn, None | Some("dqn")) => Some(AgentKind::Dqn),
            (Scenario::UnrestrictedAc, None | Some("ac")) => Some(AgentKind::Ac),
            (Scenario::UnrestrictedDqn | Scenario::UnrestrictedAc, Some(a)) => {
                return Err(Error::config(
                    "agent",
                    format!("`{a}` contradicts scenario {}", scenario.as_str()),
                ))
            }
            (Scenario::BaselineOnly, None) => None,
            (Scenario::BaselineOnly, Some(_)) => {
                return Err(Error::config("agent", "baseline-only runs register no agent"))
            }
            (_, None | Some("dqn")) => Some(AgentKind::Dqn),
            (_, Some("ac")) => Some(AgentKind::Ac),
            (_, Some(a)) => return Err(Error::config("agent", format!("unknown agent `{a}`"))),
        };
        let baselines = raw
            .baselines
            .iter()
            .map(|s| BaselineSpec::parse(s, base_dir))
            .collect::<Result<Vec<_>>>()?;

        match scenario {
            Scenario::UnrestrictedDqn | Scenario::UnrestrictedAc if !baselines.is_empty() => {
                return Err(Error::config("baselines", "unrestricted runs take no baselines"));
            }
            Scenario::BaselineOnly if baselines.len() != 1 => {
                return Err(Error::config("baselines", "baseline-only needs exactly one baseline"));
            }
            Scenario::PredictorShield | Scenario::KShield if baselines.is_empty() => {
                return Err(Error::config("baselines", "shielded runs need at least one baseline"));
            }
            _ => {}
        }

        let kshield = if scenario == Scenario::KShield {
            let d = raw.d.ok_or_else(|| Error::config("d", "required for k-shield"))?;
            let w = raw.w.ok_or_else(|| Error::config("w", "required for k-shield"))?;
            let b = match raw.b {
                Some(b) => b,
                None if baselines.len() == 1 => vec![1.0],
                None => return Err(Error::config("b", "required with several baselines")),
            };
            if b.len() != baselines.len() {
                return Err(Error::config(
                    "b",
                    format!("{} weights for {} baselines", b.len(), baselines.len()),
                ));
            }
            let params = KShieldParams {
                k_initial: raw.k_initial.unwrap_or(0.95),
                d,
                w,
                b,
            };
            // Reuse the logic's own validation for field-level messages.
            crate::shield::KShieldState::new(params.k_initial, params.d, params.w, params.b.clone())?;
            Some(params)
        } else {
            for (field, present) in [
                ("d", raw.d.is_some()),
                ("w", raw.w.is_some()),
                ("b", raw.b.is_some()),
                ("k_initial", raw.k_initial.is_some()),
            ] {
                if present {
                    return Err(Error::config(field, "only meaningful for k-shield"));
                }
            }
            None
        };

        let predictor = match (scenario, raw.predictor) {
            (Scenario::PredictorShield, Some(p)) => Some(base_dir.join(p)),
            (Scenario::PredictorShield, None) => {
                return Err(Error::config("predictor", "required for predictor-shield"))
            }
            (_, Some(_)) => {
                return Err(Error::config("predictor", "only meaningful for predictor-shield"))
            }
            (_, None) => None,
        };

        let seeds = raw.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        if seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::config("seeds", "must be distinct"));
        }
        let positive = |field: &str, v: Option<usize>, default: usize| -> Result<usize> {
            let v = v.unwrap_or(default);
            if v == 0 {
                Err(Error::config(field, "must be >= 1"))
            } else {
                Ok(v)
            }
        };
        let n_train_episodes = positive("n_train_episodes", raw.n_train_episodes, 200)?;
        let episode_length = positive("episode_length", raw.episode_length, 20)?;
        let smoothing_window = positive("smoothing_window", raw.smoothing_window, 5)?;
        let n_eval_episodes = raw.n_eval_episodes.unwrap_or(25);

        let rule = RuleBasedPolicy::new(
            raw.rule_cov_high.unwrap_or(0.3),
            raw.rule_qual_high.unwrap_or(0.3),
        )?;
        let dqn_default = DqnConfig::default();
        let dqn = DqnConfig {
            hidden: dqn_default.hidden.clone(),
            learning_rate: raw.dqn_learning_rate.unwrap_or(dqn_default.learning_rate),
            batch_size: raw.dqn_batch_size.unwrap_or(dqn_default.batch_size),
            discount: raw.dqn_discount.unwrap_or(dqn_default.discount),
            replay_capacity: raw.replay_capacity.unwrap_or(dqn_default.replay_capacity),
            epsilon: EpsilonSchedule {
                start: raw.epsilon_start.unwrap_or(dqn_default.epsilon.start),
                end: raw.epsilon_end.unwrap_or(dqn_default.epsilon.end),
                decay_episodes: raw
                    .epsilon_decay_episodes
                    .unwrap_or(dqn_default.epsilon.decay_episodes),
            },
        };
        dqn.validate().map_err(|e| prefix_field(e, "dqn_"))?;
        let ac_default = AcConfig::default();
        let ac = AcConfig {
            learning_rate: raw.ac_learning_rate.unwrap_or(ac_default.learning_rate),
            discount: raw.ac_discount.unwrap_or(ac_default.discount),
            ..ac_default
        };
        if !(ac.learning_rate.is_finite() && ac.learning_rate > 0.0) {
            return Err(Error::config("ac_learning_rate", "must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&ac.discount) {
            return Err(Error::config("ac_discount", "must lie in [0, 1)"));
        }

        let sim = raw.sim.unwrap_or_default();
        sim.validate().map_err(|e| prefix_field(e, "sim."))?;

        Ok(Self {
            scenario,
            agent,
            baselines,
            kshield,
            predictor,
            seeds,
            n_train_episodes,
            episode_length,
            n_eval_episodes,
            smoothing_window,
            decision_log: raw.decision_log.unwrap_or(true),
            rule,
            dqn,
            ac,
            sim,
            output_dir: base_dir.join(raw.output_dir),
        })
    }
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { field, reason } if !field.starts_with(prefix) => Error::Config {
            field: format!("{prefix}{field}"),
            reason,
        },
        other => other,
    }
}
