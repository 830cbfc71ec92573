use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tiltshield::baselines::{train_offline_baseline, OfflineTrainingConfig};
use tiltshield::harness::{
    compare_runs, predictor_samples, read_dataset, run_experiment, synthesize_dataset,
    write_dataset, ExperimentConfig,
};
use tiltshield::shield::{PredictorTrainingConfig, StatePredictor};
use tiltshield::sim::SimConfig;
use tiltshield::{Error, Result};

#[derive(Parser)]
#[command(name = "tiltshield", version, about = "Shielded RL for antenna tilt control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect random-policy transitions into a CSV dataset.
    Synth {
        /// Experiment config whose [sim] table describes the network.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        episode_length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the offline model-based baseline on a dataset.
    TrainBaseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fit the state predictor on a dataset and report held-out RMSE.
    TrainPredictor {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run a multi-seed experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Align one metric across run directories.
    Compare {
        #[arg(long, default_value = "reward")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
    },
}

fn sim_from(config: Option<PathBuf>) -> Result<SimConfig> {
    Ok(match config {
        Some(p) => ExperimentConfig::from_file(p)?.sim,
        None => SimConfig::default(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, samples, episode_length, seed, out } => {
            let data = synthesize_dataset(&sim_from(config)?, episode_length, samples, seed)?;
            write_dataset(&out, &data)?;
            println!("wrote {} transitions to {}", data.len(), out.display());
        }
        Command::TrainBaseline { data, out, seed, epochs } => {
            let mut cfg = OfflineTrainingConfig::default();
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let policy = train_offline_baseline(&read_dataset(&data)?, seed, &cfg)?;
            policy.save(&out)?;
            println!("saved baseline to {}", out.display());
        }
        Command::TrainPredictor { data, out, seed, epochs } => {
            let mut cfg = PredictorTrainingConfig::default();
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let samples = predictor_samples(&read_dataset(&data)?);
            let (pred, report) = StatePredictor::train(&samples, seed, &cfg)?;
            pred.save(&out)?;
            let [c, k, q] = report.heldout_rmse;
            println!(
                "saved predictor to {} (held-out RMSE cov {c:.4} cap {k:.4} qual {q:.4})",
                out.display()
            );
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let summary = run_experiment(&cfg)?;
            let failed = summary.seeds.len() - summary.completed().count();
            println!(
                "{} seeds completed, {failed} failed; outputs in {}",
                summary.completed().count(),
                summary.output_dir.display()
            );
        }
        Command::Compare { metric, out, runs } => {
            let csv = compare_runs(&runs, &metric)?.to_csv();
            match out {
                Some(p) => std::fs::write(&p, csv).map_err(|e| Error::Io { path: p, source: e })?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
