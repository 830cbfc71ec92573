use std::path::Path;
use std::process::Command;

use tiltshield::harness::{
    compare_runs, read_seed_csv, run_experiment, running_average, EpisodeMetrics, ExperimentConfig,
    SeedStatus,
};
use tiltshield::Error;

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let text = format!(
        "{body}\nseeds = [1, 2, 3]\nn_train_episodes = 6\nepisode_length = 4\nn_eval_episodes = 2\n\
         smoothing_window = 3\noutput_dir = \"out\"\n[sim]\nn_ues = 300\n"
    );
    ExperimentConfig::from_toml_str(&text, dir).unwrap()
}

fn parse_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

/// Mean of the last `w` values up to and including each index.
fn trailing(xs: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..xs.len() {
        let lo = (i + 1).saturating_sub(w);
        let mut sum = 0.0;
        for x in &xs[lo..=i] {
            sum += x;
        }
        out.push(sum / (i + 1 - lo) as f64);
    }
    out
}

#[test]
fn aggregate_recomputes_from_raw_seed_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "scenario = \"k-shield\"\nbaselines = [\"rule\"]\nd = 0.3\nw = 1");
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.completed().count(), 3);

    let out = dir.path().join("out");
    let seeds: Vec<_> = [1, 2, 3]
        .iter()
        .map(|s| read_seed_csv(out.join(format!("seed_{s}/train.csv"))).unwrap())
        .collect();
    let (header, rows) = parse_csv(&out.join("aggregated.csv"));
    assert_eq!(rows.len(), 6);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();

    type Getter = fn(&EpisodeMetrics) -> f64;
    let metrics: [(&str, Getter); 4] = [
        ("reward", |m| m.reward),
        ("cov", |m| m.cov),
        ("cap", |m| m.cap),
        ("qual", |m| m.qual),
    ];
    for (name, get) in metrics {
        let per_ep = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            (0..6)
                .map(|e| f(&seeds.iter().map(|s| get(&s[e])).collect::<Vec<_>>()))
                .collect()
        };
        let mean = trailing(&per_ep(&|v| v.iter().sum::<f64>() / v.len() as f64), 3);
        let min = trailing(&per_ep(&|v| v.iter().cloned().fold(f64::INFINITY, f64::min)), 3);
        let max = trailing(&per_ep(&|v| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)), 3);
        for (e, row) in rows.iter().enumerate() {
            let get_col = |c: &str| row[col(c)].parse::<f64>().unwrap();
            let (m, lo, hi) = (
                get_col(&format!("{name}_mean")),
                get_col(&format!("{name}_min")),
                get_col(&format!("{name}_max")),
            );
            assert_eq!(m, mean[e], "{name} mean at {e}");
            assert_eq!(lo, min[e], "{name} min at {e}");
            assert_eq!(hi, max[e], "{name} max at {e}");
            assert!(lo <= m && m <= hi);
        }
    }

    // k is recorded unsmoothed and never rises.
    let ks: Vec<f64> = rows.iter().map(|r| r[col("k_mean")].parse().unwrap()).collect();
    for (e, k) in ks.iter().enumerate() {
        let want = seeds.iter().map(|s| s[e].k.unwrap()).sum::<f64>() / 3.0;
        assert_eq!(*k, want);
    }
    assert!(ks.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.join("seed_1/decisions.csv").exists());
}

#[test]
fn trailing_average_examples() {
    assert_eq!(running_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
    assert_eq!(running_average(&[5.0, 7.0], 10), vec![5.0, 6.0]);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), "scenario = \"unrestricted-dqn\"");
        run_experiment(&cfg).unwrap();
        let out = dir.path().join("out");
        (
            std::fs::read(out.join("aggregated.csv")).unwrap(),
            std::fs::read(out.join("seed_2/train.csv")).unwrap(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn scenarios_stay_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "scenario = \"baseline-only\"\nbaselines = [\"rule\"]");
    let summary = run_experiment(&cfg).unwrap();
    let out = dir.path().join("out");
    assert!(!out.join("seed_1/decisions.csv").exists());
    for row in &summary.aggregate {
        assert_eq!(row.source_fraction_agent, 0.0);
        assert_eq!(row.k_mean, None);
    }
    for s in &summary.seeds {
        assert_eq!(s.eval.len(), 2);
    }

    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&config(dir.path(), "scenario = \"unrestricted-ac\"")).unwrap();
    assert!(!dir.path().join("out/seed_1/decisions.csv").exists());
    for row in &summary.aggregate {
        assert_eq!(row.source_fraction_agent, 1.0);
        assert_eq!(row.k_mean, None);
    }
}

#[test]
fn divergence_is_reported_not_aggregated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "scenario = \"unrestricted-dqn\"\ndqn_learning_rate = 1e200");
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
    let out = dir.path().join("out");
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("warning: 3 of 3 seeds diverged"), "{log}");
    assert!(out.join("seed_1/FAILED").exists());
    assert!(!out.join("aggregated.csv").exists());
    let (_, rows) = parse_csv(&out.join("eval_summary.csv"));
    assert!(rows.iter().all(|r| r[1] == "failed"));
}

#[test]
fn seed_status_is_exposed() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&config(dir.path(), "scenario = \"unrestricted-dqn\"")).unwrap();
    assert!(summary.seeds.iter().all(|s| s.status == SeedStatus::Completed));
    let log = std::fs::read_to_string(dir.path().join("out/run.log")).unwrap();
    assert!(!log.contains("warning"));
}

#[test]
fn comparison_of_a_run_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "scenario = \"baseline-only\"\nbaselines = [\"rule\"]");
    run_experiment(&cfg).unwrap();
    let out = dir.path().join("out");
    let c = compare_runs(&[out.clone(), out.clone()], "reward").unwrap();
    assert_eq!(c.episodes.len(), 6);
    assert_eq!(c.values[0], c.values[1]);
    assert!(c.to_csv().lines().skip(1).all(|l| l.ends_with(",0")));
    assert_eq!(c.early_mean[0], c.early_mean[1]);
    assert!(matches!(compare_runs(&[out.clone(), out.clone()], "latency"), Err(Error::Alignment(_))));
    assert!(matches!(compare_runs(&[out], "reward"), Err(Error::Contract(_))));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        ("scenario = \"k-shield\"\nbaselines = [\"rule\"]\nw = 2\noutput_dir = \"o\"", "d"),
        ("scenario = \"unrestricted-dqn\"\nbaselines = [\"rule\"]\noutput_dir = \"o\"", "baselines"),
        ("scenario = \"predictor-shield\"\nbaselines = [\"rule\"]\noutput_dir = \"o\"", "predictor"),
        ("scenario = \"unrestricted-dqn\"\nseeds = [1, 1]\noutput_dir = \"o\"", "seeds"),
    ];
    for (text, field) in bad {
        match ExperimentConfig::from_toml_str(text, dir.path()) {
            Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tiltshield"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "scenario = \"sideways\"\noutput_dir = \"o\"\n").unwrap();
    let out = cli().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));

    let out = cli().args(["run", "--config"]).arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn cli_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let ok = |cmd: &mut Command| {
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out
    };
    std::fs::write(p("sim.toml"), "scenario = \"unrestricted-dqn\"\noutput_dir = \"x\"\n[sim]\nn_ues = 300\n").unwrap();
    ok(cli().args(["synth", "--samples", "2100", "--seed", "4", "--config"]).arg(p("sim.toml")).arg("--out").arg(p("d.csv")));
    ok(cli().args(["train-baseline", "--epochs", "2", "--data"]).arg(p("d.csv")).arg("--out").arg(p("b.mlp")));
    let out = ok(cli().args(["train-predictor", "--epochs", "2", "--data"]).arg(p("d.csv")).arg("--out").arg(p("p.mlp")));
    assert!(String::from_utf8_lossy(&out.stdout).to_lowercase().contains("rmse"));
    let run_cfg = |name: &str, body: &str| {
        std::fs::write(
            p(&format!("{name}.toml")),
            format!(
                "{body}\nseeds = [1, 2]\nn_train_episodes = 3\nepisode_length = 3\nn_eval_episodes = 1\n\
                 output_dir = \"{name}\"\n[sim]\nn_ues = 300\n"
            ),
        )
        .unwrap();
        ok(cli().args(["run", "--config"]).arg(p(&format!("{name}.toml"))));
    };
    run_cfg("a", "scenario = \"baseline-only\"\nbaselines = [\"model:b.mlp\"]");
    run_cfg("b", "scenario = \"predictor-shield\"\nbaselines = [\"rule\", \"model:b.mlp\"]\npredictor = \"p.mlp\"");
    ok(cli().args(["compare", "--metric", "cov"]).arg(p("a")).arg(p("b")).arg("--out").arg(p("cmp.csv")));
    let text = std::fs::read_to_string(p("cmp.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 2);
}
