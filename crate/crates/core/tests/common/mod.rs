#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};
use tiltshield::sim::SimConfig;

/// Pearson chi-square goodness-of-fit at 99% confidence.
pub fn chi_square_passes(observed: &[u64], expected_probs: &[f64]) -> (bool, f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = (observed.len() - 1) as f64;
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
    (stat < critical, stat, critical)
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// A reduced network that keeps the seven-site geometry but fewer UEs.
pub fn small_sim() -> SimConfig {
    SimConfig { n_ues: 300, ..SimConfig::default() }
}
