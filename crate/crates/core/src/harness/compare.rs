//! Side-by-side comparison of aggregated run outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub metric: String,
    pub labels: Vec<String>,
    pub episodes: Vec<usize>,
    /// `values[run][row]`
    pub values: Vec<Vec<f64>>,
    /// Mean over the first quarter of episodes, per run.
    pub early_mean: Vec<f64>,
    /// Mean over the last quarter of episodes, per run.
    pub final_mean: Vec<f64>,
}

fn read_column(dir: &Path, metric: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let path = dir.join("aggregated.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    })?;
    let header = r
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let col = find(metric)
        .or_else(|| find(&format!("{metric}_mean")))
        .ok_or_else(|| Error::Alignment(format!("{}: no column `{metric}`", path.display())))?;
    let ep = find("episode")
        .ok_or_else(|| Error::Alignment(format!("{}: no `episode` column", path.display())))?;
    let mut episodes = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let parse_err = |what: &str| Error::Format(format!("{}: bad {what}", path.display()));
        episodes.push(rec[ep].parse::<usize>().map_err(|_| parse_err("episode"))?);
        let v = &rec[col];
        values.push(if v.is_empty() {
            f64::NAN
        } else {
            v.parse::<f64>().map_err(|_| parse_err(metric))?
        });
    }
    Ok((episodes, values))
}

fn quarter_mean(xs: &[f64], last: bool) -> f64 {
    let q = xs.len().div_ceil(4).max(1).min(xs.len());
    let slice = if last { &xs[xs.len() - q..] } else { &xs[..q] };
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Align the `metric` curve of several run directories on episode index.
/// `metric` is either a column name or a metric whose `_mean` column exists.
pub fn compare_runs(run_dirs: &[PathBuf], metric: &str) -> Result<Comparison> {
    if run_dirs.len() < 2 {
        return Err(Error::Contract("compare needs at least two runs".into()));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut episodes: Option<Vec<usize>> = None;
    for dir in run_dirs {
        let (eps, vals) = read_column(dir, metric)?;
        match &episodes {
            None => episodes = Some(eps),
            Some(first) if *first != eps => {
                return Err(Error::Alignment(format!(
                    "{} has {} episodes, {} has {}",
                    run_dirs[0].display(),
                    first.len(),
                    dir.display(),
                    eps.len()
                )));
            }
            Some(_) => {}
        }
        labels.push(
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string()),
        );
        values.push(vals);
    }
    let episodes = episodes.unwrap_or_default();
    if episodes.is_empty() {
        return Err(Error::Alignment("runs contain no episodes".into()));
    }
    let early_mean = values.iter().map(|v| quarter_mean(v, false)).collect();
    let final_mean = values.iter().map(|v| quarter_mean(v, true)).collect();
    Ok(Comparison {
        metric: metric.to_string(),
        labels,
        episodes,
        values,
        early_mean,
        final_mean,
    })
}

impl Comparison {
    /// Per-episode table with one column per run, then one `<run>-<first>`
    /// difference column per later run. Two trailing rows hold the
    /// early-quarter and final-quarter means.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        for l in &self.labels[1..] {
            let _ = write!(out, ",{l}-{}", self.labels[0]);
        }
        out.push('\n');
        let row = |out: &mut String, key: &str, vals: &[f64]| {
            out.push_str(key);
            for v in vals {
                let _ = write!(out, ",{v}");
            }
            for v in &vals[1..] {
                let _ = write!(out, ",{}", v - vals[0]);
            }
            out.push('\n');
        };
        for (i, e) in self.episodes.iter().enumerate() {
            let vals: Vec<f64> = self.values.iter().map(|v| v[i]).collect();
            row(&mut out, &e.to_string(), &vals);
        }
        row(&mut out, "early_mean", &self.early_mean);
        row(&mut out, "final_mean", &self.final_mean);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(dir: &Path, name: &str, rewards: &[f64]) -> PathBuf {
        let d = dir.join(name);
        std::fs::create_dir_all(&d).unwrap();
        let mut s = String::from("episode,reward_mean,k_mean\n");
        for (i, r) in rewards.iter().enumerate() {
            s.push_str(&format!("{},{r},\n", i + 1));
        }
        std::fs::write(d.join("aggregated.csv"), s).unwrap();
        d
    }

    #[test]
    fn aligned_comparison() {
        let tmp = tempfile::tempdir().unwrap();
        let a = run(tmp.path(), "a", &[-1.0, -0.8, -0.6, -0.4]);
        let b = run(tmp.path(), "b", &[-0.5, -0.5, -0.5, -0.5]);
        let c = compare_runs(&[a, b], "reward").unwrap();
        assert_eq!(c.early_mean, vec![-1.0, -0.5]);
        assert_eq!(c.final_mean, vec![-0.4, -0.5]);
        let csv = c.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "episode,a,b,b-a");
        assert_eq!(csv.lines().nth(1).unwrap(), "1,-1,-0.5,0.5");
    }

    #[test]
    fn misaligned_or_missing_column() {
        let tmp = tempfile::tempdir().unwrap();
        let a = run(tmp.path(), "a", &[-1.0, -0.8]);
        let b = run(tmp.path(), "b", &[-0.5]);
        assert!(matches!(compare_runs(&[a.clone(), b], "reward"), Err(Error::Alignment(_))));
        let c = run(tmp.path(), "c", &[-0.5, -0.1]);
        assert!(matches!(compare_runs(&[a, c], "latency"), Err(Error::Alignment(_))));
    }
}
