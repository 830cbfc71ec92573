//! Dense feedforward network trained by plain SGD on masked mean squared error.
//!
//! Hidden layers use ReLU, the output layer is linear. Weights are stored per
//! layer as row-major `out x in` matrices.
//!
//! # File format
//!
//! `.mlp` files are little-endian:
//!
//! ```text
//! magic    4 bytes  "TMLP"
//! version  u32      1
//! n_dims   u32
//! dims     u32 * n_dims
//! params   f64 * n  for each layer: weights (row-major), then biases
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::rng::Rng as ChaRng;

pub const MAGIC: [u8; 4] = *b"TMLP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl SgdConfig {
    pub fn new(learning_rate: f64, batch_size: usize) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be finite and > 0"));
        }
        if batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        Ok(Self {
            learning_rate,
            batch_size,
        })
    }
}

/// One training example. Outputs with `mask[j] == false` do not contribute
/// to the loss.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
    pub mask: &'a [bool],
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        Self::init_with_rng(layer_dims, &mut ChaRng::seed_from_u64(seed))
    }

    pub fn init_with_rng<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Contract(format!(
                "a network needs at least 2 layer dims, got {}",
                layer_dims.len()
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Contract("layer widths must be >= 1".into()));
        }
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Build a network from explicit parameters.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Contract(format!("bad layer dims {layer_dims:?}")));
        }
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::Contract(format!(
                "{n_layers} layers but {} weight and {} bias blocks",
                weights.len(),
                biases.len()
            )));
        }
        for (l, pair) in layer_dims.windows(2).enumerate() {
            if weights[l].len() != pair[0] * pair[1] || biases[l].len() != pair[1] {
                return Err(Error::Contract(format!("layer {l} shape mismatch")));
            }
        }
        let net = Self {
            layer_dims,
            weights,
            biases,
        };
        if !net.parameters().all(f64::is_finite) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn n_weights(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    pub fn n_biases(&self) -> usize {
        self.biases.iter().map(Vec::len).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.n_weights() + self.n_biases()
    }

    /// All parameters in file order.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if index < w.len() {
                return &mut w[index];
            }
            index -= w.len();
            if index < b.len() {
                return &mut b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn parameter(&self, index: usize) -> f64 {
        self.parameters().nth(index).expect("parameter index out of range")
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        *self.parameter_mut(index) = value;
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut act = input.to_vec();
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let mut next = affine(&self.weights[l], &self.biases[l], &act);
            if l < last {
                relu_in_place(&mut next);
            }
            act = next;
        }
        Ok(act)
    }

    fn check_batch(&self, batch: &[Sample<'_>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Contract("empty training batch".into()));
        }
        let out = self.output_dim();
        for s in batch {
            if s.input.len() != self.input_dim() || s.target.len() != out || s.mask.len() != out {
                return Err(Error::Contract(format!(
                    "sample shapes ({}, {}, {}) do not match network {:?}",
                    s.input.len(),
                    s.target.len(),
                    s.mask.len(),
                    self.layer_dims
                )));
            }
        }
        if batch.iter().all(|s| s.mask.iter().all(|m| !m)) {
            return Err(Error::Contract("mask selects no outputs".into()));
        }
        Ok(())
    }

    /// Masked mean squared error over every selected output in the batch.
    pub fn loss(&self, batch: &[Sample<'_>]) -> Result<f64> {
        self.check_batch(batch)?;
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in batch {
            let y = self.forward(s.input)?;
            for j in 0..y.len() {
                if s.mask[j] {
                    let e = y[j] - s.target[j];
                    sum += e * e;
                    count += 1;
                }
            }
        }
        Ok(sum / count as f64)
    }

    /// Loss and its gradient by backpropagation.
    pub fn gradients(&self, batch: &[Sample<'_>]) -> Result<(f64, Gradients)> {
        self.check_batch(batch)?;
        let n_layers = self.weights.len();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let count: usize = batch
            .iter()
            .map(|s| s.mask.iter().filter(|&&m| m).count())
            .sum();
        let scale = 1.0 / count as f64;
        let mut loss = 0.0;

        // activations[l] is the input to layer l; activations[n_layers] is the output.
        let mut activations: Vec<Vec<f64>> =
            self.layer_dims.iter().map(|&d| vec![0.0; d]).collect();
        let mut delta: Vec<f64> = Vec::new();
        let mut prev_delta: Vec<f64> = Vec::new();

        for s in batch {
            activations[0].copy_from_slice(s.input);
            for l in 0..n_layers {
                let (head, tail) = activations.split_at_mut(l + 1);
                affine_into(&self.weights[l], &self.biases[l], &head[l], &mut tail[0]);
                if l + 1 < n_layers {
                    relu_in_place(&mut tail[0]);
                }
            }
            let out = &activations[n_layers];
            delta.clear();
            for j in 0..out.len() {
                if s.mask[j] {
                    let e = out[j] - s.target[j];
                    loss += e * e;
                    delta.push(2.0 * e * scale);
                } else {
                    delta.push(0.0);
                }
            }
            for l in (0..n_layers).rev() {
                let input = &activations[l];
                let n_in = input.len();
                let w = &self.weights[l];
                let gw_l = &mut gw[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[l][o] += d;
                    let row = &mut gw_l[o * n_in..(o + 1) * n_in];
                    for (g, &x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if l > 0 {
                    prev_delta.clear();
                    prev_delta.resize(n_in, 0.0);
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &w[o * n_in..(o + 1) * n_in];
                        for (p, &wv) in prev_delta.iter_mut().zip(row) {
                            *p += d * wv;
                        }
                    }
                    // ReLU derivative evaluated on the stored post-activation.
                    for (p, &a) in prev_delta.iter_mut().zip(input) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    std::mem::swap(&mut delta, &mut prev_delta);
                }
            }
        }
        Ok((
            loss * scale,
            Gradients {
                weights: gw,
                biases: gb,
            },
        ))
    }

    /// One SGD update on `batch`; returns the loss before the update.
    pub fn sgd_step(&mut self, batch: &[Sample<'_>], config: &SgdConfig) -> Result<f64> {
        let (loss, grads) = self.gradients(batch)?;
        let finite = loss.is_finite()
            && grads
                .weights
                .iter()
                .chain(&grads.biases)
                .all(|g| g.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient (loss = {loss})"
            )));
        }
        let lr = config.learning_rate;
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (p, d) in w.iter_mut().zip(g) {
                *p -= lr * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (p, d) in b.iter_mut().zip(g) {
                *p -= lr * d;
            }
        }
        Ok(loss)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.layer_dims.len() + 8 * self.parameter_count());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_dims.len() as u32).to_le_bytes());
        for &d in &self.layer_dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for p in self.parameters() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        if cursor.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not an .mlp file".into()));
        }
        let version = cursor.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n_dims = cursor.u32()? as usize;
        if n_dims < 2 {
            return Err(Error::Format(format!("{n_dims} layer dims declared")));
        }
        let mut dims = Vec::with_capacity(n_dims.min(64));
        for _ in 0..n_dims {
            let d = cursor.u32()? as usize;
            if d == 0 {
                return Err(Error::Format("zero-width layer".into()));
            }
            dims.push(d);
        }
        let mut weights = Vec::with_capacity(n_dims - 1);
        let mut biases = Vec::with_capacity(n_dims - 1);
        for pair in dims.windows(2) {
            weights.push(cursor.f64s(pair[0] * pair[1])?);
            biases.push(cursor.f64s(pair[1])?);
        }
        if cursor.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - cursor.pos
            )));
        }
        Self::from_parts(dims, weights, biases)
            .map_err(|e| Error::Format(format!("invalid parameters: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    affine_into(w, b, x, &mut out);
    out
}

#[inline]
fn affine_into(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        *y = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

#[inline]
fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::from_parts(
            vec![3, 4, 2],
            vec![vec![0.0; 12], vec![0.0; 8]],
            vec![vec![0.0; 4], vec![0.0; 2]],
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_parts(vec![3, 3], vec![w], vec![vec![0.0; 3]]).unwrap();
        assert_eq!(net.forward(&[0.5, 2.0, 0.0]).unwrap(), vec![0.5, 2.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::init(&[4, 8, 3], 1).unwrap();
        assert!(matches!(net.forward(&[1.0; 3]), Err(Error::Contract(_))));
        assert!(matches!(Mlp::init(&[4], 1), Err(Error::Contract(_))));
        assert!(matches!(Mlp::init(&[], 1), Err(Error::Contract(_))));
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = Mlp::init(&[4, 8, 3], 1).unwrap();
        let b = Mlp::init(&[4, 8, 3], 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights()[0].len(), 8 * 4);
        assert_eq!(a.weights()[1].len(), 3 * 8);
        assert!(a.biases().iter().flatten().all(|&x| x == 0.0));
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(a.weights()[0].iter().all(|w| w.abs() < limit));
    }

    #[test]
    fn fixed_point_batch_leaves_net_unchanged() {
        let mut net = Mlp::init(&[4, 8, 3], 5).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let y = net.forward(&x).unwrap();
        let before = net.clone();
        let cfg = SgdConfig::new(0.1, 1).unwrap();
        let loss = net
            .sgd_step(&[Sample { input: &x, target: &y, mask: &[true; 3] }], &cfg)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn linear_least_squares_closed_form() {
        // Single layer 2 -> 2, identity output. dL/dw_oi = 2 (w_o.x + b_o - y_o) x_i / out_dim.
        let w = vec![0.3, -0.2, 0.5, 0.1];
        let b = vec![0.05, -0.1];
        let mut net = Mlp::from_parts(vec![2, 2], vec![w.clone()], vec![b.clone()]).unwrap();
        let x = [1.5, -0.5];
        let y = [0.2, 0.7];
        let lr = 0.01;
        net.sgd_step(
            &[Sample { input: &x, target: &y, mask: &[true, true] }],
            &SgdConfig::new(lr, 1).unwrap(),
        )
        .unwrap();
        for o in 0..2 {
            let pred = w[o * 2] * x[0] + w[o * 2 + 1] * x[1] + b[o];
            let err = pred - y[o];
            for i in 0..2 {
                let expected = w[o * 2 + i] - lr * 2.0 * err * x[i] / 2.0;
                assert_abs_diff_eq!(net.weights()[0][o * 2 + i], expected, epsilon = 1e-15);
            }
            assert_abs_diff_eq!(net.biases()[0][o], b[o] - lr * 2.0 * err / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn masked_outputs_do_not_move_their_rows() {
        let mut net = Mlp::from_parts(vec![2, 3], vec![vec![0.1; 6]], vec![vec![0.0; 3]]).unwrap();
        let before = net.clone();
        net.sgd_step(
            &[Sample { input: &[1.0, 2.0], target: &[5.0, 5.0, 5.0], mask: &[false, true, false] }],
            &SgdConfig::new(0.01, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(net.weights()[0][0..2], before.weights()[0][0..2]);
        assert_eq!(net.weights()[0][4..6], before.weights()[0][4..6]);
        assert_ne!(net.weights()[0][2..4], before.weights()[0][2..4]);
    }

    #[test]
    fn divergence_is_reported_without_update() {
        let mut net = Mlp::from_parts(vec![1, 1], vec![vec![1e200]], vec![vec![0.0]]).unwrap();
        let before = net.clone();
        let err = net
            .sgd_step(
                &[Sample { input: &[1e200], target: &[0.0], mask: &[true] }],
                &SgdConfig::new(0.1, 1).unwrap(),
            )
            .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(net, before);
    }

    #[test]
    fn empty_batch_and_empty_mask_are_errors() {
        let mut net = Mlp::init(&[2, 2], 0).unwrap();
        let cfg = SgdConfig::new(0.1, 1).unwrap();
        assert!(matches!(net.sgd_step(&[], &cfg), Err(Error::Contract(_))));
        let s = Sample { input: &[1.0, 1.0], target: &[0.0, 0.0], mask: &[false, false] };
        assert!(matches!(net.sgd_step(&[s], &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn header_counts_for_4_8_3() {
        let net = Mlp::init(&[4, 8, 3], 2).unwrap();
        assert_eq!(net.n_weights(), 4 * 8 + 8 * 3);
        assert_eq!(net.n_biases(), 8 + 3);
        let bytes = net.to_bytes();
        assert_eq!(&bytes[0..4], b"TMLP");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 12 + 3 * 4 + 8 * 67);
    }

    #[test]
    fn truncated_and_corrupt_streams() {
        let bytes = Mlp::init(&[4, 8, 3], 2).unwrap().to_bytes();
        for cut in [0, 3, 11, 20, bytes.len() - 1] {
            assert!(matches!(Mlp::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Mlp::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Mlp::from_bytes(&bad), Err(Error::Format(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Mlp::from_bytes(&long), Err(Error::Format(_))));
    }
}
