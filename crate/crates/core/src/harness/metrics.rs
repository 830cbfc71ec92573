//! Per-episode metrics, per-seed CSVs and cross-seed aggregation.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Means over the steps of one episode (and over cells for the KPIs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub reward: f64,
    pub cov: f64,
    pub cap: f64,
    pub qual: f64,
    /// k during the episode; absent outside k-shield runs.
    pub k: Option<f64>,
    /// Fraction of executed actions that came from the agent.
    pub source_fraction_agent: f64,
}

pub const SEED_HEADER: &str = "episode,reward,cov,cap,qual,k,source_fraction_agent";

pub const AGGREGATE_HEADER: &str = "episode,reward_mean,reward_min,reward_max,cov_mean,cov_min,\
cov_max,cap_mean,cap_min,cap_max,qual_mean,qual_min,qual_max,k_mean,source_fraction_agent";

pub fn write_seed_csv(path: impl AsRef<Path>, rows: &[EpisodeMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        w.write_record(SEED_HEADER.split(',')).map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_seed_csv(path: impl AsRef<Path>) -> Result<Vec<EpisodeMetrics>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!()
    }
    Error::Format(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub reward: Band,
    pub cov: Band,
    pub cap: Band,
    pub qual: Band,
    pub k_mean: Option<f64>,
    pub source_fraction_agent: f64,
}

/// Trailing running average over up to `window` points.
pub fn running_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &xs[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn raw_band(values: impl Iterator<Item = f64> + Clone) -> Band {
    let n = values.clone().count() as f64;
    Band {
        mean: values.clone().sum::<f64>() / n,
        min: values.clone().fold(f64::INFINITY, f64::min),
        max: values.fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Aggregate per-seed curves episode by episode.
///
/// Mean, min and max across seeds are taken on the raw per-seed values and
/// each of the three series is then smoothed with the same trailing window,
/// which keeps `min <= mean <= max` on every row. `k_mean` and the agent
/// source fraction are not smoothed.
pub fn aggregate(seeds: &[Vec<EpisodeMetrics>], window: usize) -> Result<Vec<AggregateRow>> {
    let first = seeds
        .first()
        .ok_or_else(|| Error::Contract("aggregation needs at least one seed".into()))?;
    let n = first.len();
    if seeds.iter().any(|s| s.len() != n) {
        return Err(Error::Alignment("seeds have different episode counts".into()));
    }
    for s in seeds {
        for (a, b) in s.iter().zip(first) {
            if a.episode != b.episode {
                return Err(Error::Alignment(format!(
                    "episode {} does not line up with {}",
                    a.episode, b.episode
                )));
            }
        }
    }
    type Getter = fn(&EpisodeMetrics) -> f64;
    let getters: [Getter; 4] = [|m| m.reward, |m| m.cov, |m| m.cap, |m| m.qual];
    let bands: Vec<Vec<Band>> = getters
        .iter()
        .map(|g| {
            let raw: Vec<Band> = (0..n)
                .map(|e| raw_band(seeds.iter().map(move |s| g(&s[e]))))
                .collect();
            let mean = running_average(&raw.iter().map(|b| b.mean).collect::<Vec<_>>(), window);
            let min = running_average(&raw.iter().map(|b| b.min).collect::<Vec<_>>(), window);
            let max = running_average(&raw.iter().map(|b| b.max).collect::<Vec<_>>(), window);
            (0..n)
                .map(|e| Band { mean: mean[e], min: min[e], max: max[e] })
                .collect()
        })
        .collect();
    let n_seeds = seeds.len() as f64;
    Ok((0..n)
        .map(|e| {
            let ks: Vec<f64> = seeds.iter().filter_map(|s| s[e].k).collect();
            AggregateRow {
                episode: first[e].episode,
                reward: bands[0][e],
                cov: bands[1][e],
                cap: bands[2][e],
                qual: bands[3][e],
                k_mean: (ks.len() == seeds.len()).then(|| ks.iter().sum::<f64>() / n_seeds),
                source_fraction_agent: seeds
                    .iter()
                    .map(|s| s[e].source_fraction_agent)
                    .sum::<f64>()
                    / n_seeds,
            }
        })
        .collect())
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}", r.episode);
        for b in [r.reward, r.cov, r.cap, r.qual] {
            let _ = write!(out, ",{},{},{}", b.mean, b.min, b.max);
        }
        let k = r.k_mean.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(out, ",{k},{}", r.source_fraction_agent);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(episode: usize, reward: f64, k: Option<f64>) -> EpisodeMetrics {
        EpisodeMetrics {
            episode,
            reward,
            cov: 0.1,
            cap: 0.5,
            qual: 0.2,
            k,
            source_fraction_agent: 0.5,
        }
    }

    #[test]
    fn running_average_is_trailing() {
        assert_eq!(running_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(running_average(&[1.0, 3.0], 1), vec![1.0, 3.0]);
    }

    #[test]
    fn aggregate_single_window() {
        let a = vec![m(1, -0.2, Some(0.9)), m(2, -0.4, Some(0.8))];
        let b = vec![m(1, -0.4, Some(0.7)), m(2, -0.2, Some(0.8))];
        let rows = aggregate(&[a, b], 1).unwrap();
        assert!((rows[0].reward.mean + 0.3).abs() < 1e-15);
        assert_eq!(rows[0].reward.min, -0.4);
        assert_eq!(rows[0].reward.max, -0.2);
        assert!((rows[0].k_mean.unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn mismatched_seeds_rejected() {
        let a = vec![m(1, -0.2, None)];
        let b = vec![m(1, -0.2, None), m(2, -0.2, None)];
        assert!(matches!(aggregate(&[a, b], 5), Err(Error::Alignment(_))));
    }

    #[test]
    fn seed_csv_round_trip() {
        let rows = vec![m(1, -0.25, None), m(2, -1.0 / 3.0, Some(0.95))];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_seed_csv(&p, &rows).unwrap();
        assert_eq!(read_seed_csv(&p).unwrap(), rows);
        let header = std::fs::read_to_string(&p).unwrap();
        assert_eq!(header.lines().next().unwrap(), SEED_HEADER);
    }
}
