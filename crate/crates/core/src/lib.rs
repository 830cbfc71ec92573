//! Shielded reinforcement learning for remote electrical tilt (RET) optimisation.
//!
//! The crate is organised around the control loop of a safety shield:
//!
//! * [`sim`] maps per-cell antenna downtilts to per-cell risk KPIs on a
//!   hexagonal urban-macro layout.
//! * [`env`] wraps the simulator as an episodic MDP with per-cell states,
//!   tilt-change actions and a log-sum risk reward.
//! * [`nn`] is a small dense network with backpropagation and plain SGD.
//! * [`agents`] holds the DQN and actor-critic learners.
//! * [`baselines`] holds the rule-based and offline model-based safe policies.
//! * [`shield`] mediates between proposers and the environment using either
//!   the state-predictor logic or the k-shield policy-mixing logic.
//! * [`harness`] runs multi-seed experiments and writes CSV metrics.

pub mod agents;
pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod shield;
pub mod sim;

pub use error::{Error, Result};
