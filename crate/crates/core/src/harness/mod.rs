//! Experiment harness: configuration, offline datasets, multi-seed runs and
//! run comparison.

pub mod compare;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod runner;

pub use compare::{compare_runs, Comparison};
pub use config::{AgentKind, BaselineSpec, ExperimentConfig, KShieldParams, Scenario};
pub use dataset::{predictor_samples, read_dataset, synthesize_dataset, write_dataset};
pub use metrics::{aggregate, read_seed_csv, running_average, AggregateRow, Band, EpisodeMetrics};
pub use runner::{run_experiment, RunSummary, SeedResult, SeedStatus};
