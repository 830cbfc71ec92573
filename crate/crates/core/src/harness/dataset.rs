//! Offline transition datasets collected with a uniformly random policy.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::{CellState, Env, EpisodeConfig, TiltAction, Transition};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::shield::PredictorSample;
use crate::sim::{SimConfig, Simulator};

pub const DATASET_HEADER: &str = "episode,step,cell,tilt_norm,cov,cap,qual,action,reward,\
next_tilt_norm,next_cov,next_cap,next_qual";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    episode: usize,
    step: usize,
    cell: usize,
    tilt_norm: f64,
    cov: f64,
    cap: f64,
    qual: f64,
    action: i32,
    reward: f64,
    next_tilt_norm: f64,
    next_cov: f64,
    next_cap: f64,
    next_qual: f64,
}

impl From<&Transition> for Row {
    fn from(t: &Transition) -> Self {
        Row {
            episode: t.episode,
            step: t.step,
            cell: t.cell,
            tilt_norm: t.state.tilt_norm,
            cov: t.state.cov,
            cap: t.state.cap,
            qual: t.state.qual,
            action: t.action.delta(),
            reward: t.reward,
            next_tilt_norm: t.next_state.tilt_norm,
            next_cov: t.next_state.cov,
            next_cap: t.next_state.cap,
            next_qual: t.next_state.qual,
        }
    }
}

impl TryFrom<Row> for Transition {
    type Error = Error;

    fn try_from(r: Row) -> Result<Self> {
        let state = CellState { tilt_norm: r.tilt_norm, cov: r.cov, cap: r.cap, qual: r.qual };
        let next_state = CellState {
            tilt_norm: r.next_tilt_norm,
            cov: r.next_cov,
            cap: r.next_cap,
            qual: r.next_qual,
        };
        state.check()?;
        next_state.check()?;
        Ok(Transition {
            cell: r.cell,
            state,
            action: TiltAction::from_delta(r.action)?,
            reward: r.reward,
            next_state,
            episode: r.episode,
            step: r.step,
        })
    }
}

/// Roll out a uniformly random tilt policy until `n_samples` per-cell
/// transitions are collected. Every episode starts from a random reset.
pub fn synthesize_dataset(
    sim: &SimConfig,
    episode_length: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    let simulator = Simulator::from_config(sim)?;
    synthesize_with(simulator, episode_length, n_samples, seed)
}

/// As [`synthesize_dataset`] on an already built simulator.
pub fn synthesize_with(
    simulator: Simulator,
    episode_length: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    if episode_length == 0 {
        return Err(Error::config("episode_length", "must be >= 1"));
    }
    let mut env = Env::new(simulator, EpisodeConfig { episode_length, n_episodes: 1 })?;
    let mut rng = stream_rng(seed, stream::DATASET, 0);
    let mut out = Vec::with_capacity(n_samples);
    let mut episode = 0u64;
    while out.len() < n_samples {
        episode += 1;
        env.reset(derive_seed(seed, stream::RESET, episode))?;
        while !env.episode_done() && out.len() < n_samples {
            let actions: Vec<TiltAction> = (0..env.n_cells())
                .map(|_| *TiltAction::ALL.choose(&mut rng).expect("non-empty"))
                .collect();
            let outcome = env.step(&actions)?;
            let room = n_samples - out.len();
            out.extend(outcome.transitions.into_iter().take(room));
        }
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, data: &[Transition]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for t in data {
        w.serialize(Row::from(t)).map_err(|e| csv_error(path, e))?;
    }
    if data.is_empty() {
        w.write_record(DATASET_HEADER.split(',')).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Transition>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != DATASET_HEADER {
        return Err(Error::Format(format!(
            "{}: unexpected dataset header",
            path.display()
        )));
    }
    r.deserialize::<Row>()
        .map(|row| Transition::try_from(row.map_err(|e| csv_error(path, e))?))
        .collect()
}

/// `(kpis, action, next kpis)` triples for state-predictor training.
pub fn predictor_samples(data: &[Transition]) -> Vec<PredictorSample> {
    data.iter()
        .map(|t| (t.state.kpis(), t.action, t.next_state.kpis()))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig { n_ues: 200, ..SimConfig::default() }
    }

    #[test]
    fn exact_count_and_determinism() {
        let a = synthesize_dataset(&small(), 5, 250, 3).unwrap();
        let b = synthesize_dataset(&small(), 5, 250, 3).unwrap();
        assert_eq!(a.len(), 250);
        assert_eq!(a, b);
        let c = synthesize_dataset(&small(), 5, 250, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let data = synthesize_dataset(&small(), 4, 100, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &data).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), data);
    }

    #[test]
    fn bad_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
    }
}
