//! Sweep a uniform downtilt across the default network and print the mean
//! per-cell KPIs and reward at each setting.
//!
//!     cargo run --release --example radio_landscape

use tiltshield::env::reward;
use tiltshield::sim::{SimConfig, Simulator, TiltVector};

fn main() -> tiltshield::Result<()> {
    let cfg = SimConfig::default();
    let sim = Simulator::from_config(&cfg)?;
    println!("cells {}, UEs {}", sim.n_cells(), cfg.n_ues);
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "tilt", "cov", "cap", "qual", "reward");
    let mut tilt = cfg.min_tilt_deg;
    while tilt <= cfg.max_tilt_deg {
        let kpis = sim.kpis(&TiltVector::uniform(tilt, &cfg)?)?;
        let n = kpis.len() as f64;
        let avg = |f: fn(&tiltshield::sim::CellKpis) -> f64| kpis.iter().map(f).sum::<f64>() / n;
        let r = kpis.iter().map(reward).sum::<tiltshield::Result<f64>>()? / n;
        println!(
            "{tilt:>6.1} {:>8.4} {:>8.4} {:>8.4} {r:>8.4}",
            avg(|k| k.cov),
            avg(|k| k.cap),
            avg(|k| k.qual)
        );
        tilt += 1.0;
    }
    Ok(())
}
