//! Fit a small network to a noisy 2-D function with minibatch SGD and check
//! one backpropagated gradient against a central difference.
//!
//!     cargo run --release --example mlp_regression

use rand::{Rng as _, SeedableRng};
use tiltshield::nn::{Mlp, Sample, SgdConfig};
use tiltshield::rng::Rng;

fn target(x: &[f64]) -> f64 {
    (2.0 * x[0]).sin() + 0.5 * x[1] * x[1]
}

fn main() -> tiltshield::Result<()> {
    let mut rng = Rng::seed_from_u64(0);
    let xs: Vec<[f64; 2]> = (0..2_000).map(|_| [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]).collect();
    let ys: Vec<[f64; 1]> = xs.iter().map(|x| [target(x) + rng.gen_range(-0.05..0.05)]).collect();
    let mask = [true];
    let data: Vec<Sample<'_>> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| Sample { input: x, target: y, mask: &mask })
        .collect();

    let mut net = Mlp::init(&[2, 32, 32, 1], 1)?;
    let cfg = SgdConfig::new(0.01, 32)?;
    for epoch in 0..=40 {
        if epoch % 10 == 0 {
            println!("epoch {epoch:>3}  loss {:.5}", net.loss(&data)?);
        }
        for batch in data.chunks(32) {
            net.sgd_step(batch, &cfg)?;
        }
    }

    let (_, grads) = net.gradients(&data[..16])?;
    let i = 7;
    let eps = 1e-5;
    let mut plus = net.clone();
    plus.set_parameter(i, net.parameter(i) + eps);
    let mut minus = net.clone();
    minus.set_parameter(i, net.parameter(i) - eps);
    let numeric = (plus.loss(&data[..16])? - minus.loss(&data[..16])?) / (2.0 * eps);
    println!("parameter {i}: backprop {:.8}, finite difference {numeric:.8}", grads.weights[0][i]);
    Ok(())
}
