//! Small dense networks with hand-written backpropagation.
//!
//! Parameters live in one flat `f64` buffer; layer `k` stores its weight
//! matrix row-major (`out x in`) followed by its bias. Gradients use the same
//! layout, which keeps Adam, clipping and checkpointing layout-agnostic.

mod adam;
mod batch;
pub mod special;

pub use adam::{clip_grad_norm, AdamState};
pub use batch::BatchCache;
pub use special::{digamma, log_gamma, trigamma};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// What the last layer produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// `2 * actions` raw outputs mapped through `softplus + 1` into Beta
    /// parameters: the first half are alphas, the second half betas.
    Beta { actions: usize },
    /// One unconstrained value.
    Value,
}

impl Head {
    pub fn width(&self) -> usize {
        match self {
            Head::Beta { actions } => 2 * actions,
            Head::Value => 1,
        }
    }

    fn output_gain(&self) -> f64 {
        match self {
            Head::Beta { .. } => 0.01,
            Head::Value => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
}

impl MlpSpec {
    pub fn actor() -> Self {
        Self {
            input_dim: 12,
            hidden: vec![64, 64],
            head: Head::Beta { actions: 4 },
        }
    }

    pub fn critic() -> Self {
        Self {
            input_dim: 12,
            hidden: vec![64, 64],
            head: Head::Value,
        }
    }

    /// Layer widths from input to raw output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend(&self.hidden);
        d.push(self.head.width());
        d
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    spec: MlpSpec,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LayerView {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input to each layer; entry 0 is the network input.
    inputs: Vec<Vec<f64>>,
    raw: Vec<f64>,
}

/// `max(x, 0) + ln(1 + e^-|x|)`, finite for any input.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl NetParams {
    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        Self { spec, data: vec![0.0; n] }
    }

    pub fn from_flat(spec: MlpSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                data.len()
            )));
        }
        Ok(Self { spec, data })
    }

    /// Orthogonal weights (gain sqrt(2) on hidden layers, head-specific gain
    /// on the output layer) and zero biases.
    pub fn init_orthogonal(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        let layers = p.layers();
        let last = layers.len() - 1;
        for (k, lv) in layers.iter().enumerate() {
            let gain = if k == last {
                p.spec.head.output_gain()
            } else {
                std::f64::consts::SQRT_2
            };
            let w = orthogonal(lv.out, lv.inp, gain, &mut rng);
            p.data[lv.w..lv.w + lv.out * lv.inp].copy_from_slice(&w);
        }
        p
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn layers(&self) -> Vec<LayerView> {
        let mut off = 0;
        self.spec
            .dims()
            .windows(2)
            .map(|d| {
                let lv = LayerView {
                    inp: d[0],
                    out: d[1],
                    w: off,
                    b: off + d[0] * d[1],
                };
                off += d[0] * d[1] + d[1];
                lv
            })
            .collect()
    }

    /// Weight matrix of layer `k` as `(rows, cols, row-major values)`.
    pub fn weight(&self, k: usize) -> (usize, usize, &[f64]) {
        let lv = self.layers()[k];
        (lv.out, lv.inp, &self.data[lv.w..lv.b])
    }

    pub fn bias(&self, k: usize) -> &[f64] {
        let lv = self.layers()[k];
        &self.data[lv.b..lv.b + lv.out]
    }

    /// Raw (pre-head-activation) outputs plus the backward cache.
    pub fn forward_raw(&self, x: &[f64]) -> Result<(Vec<f64>, Cache)> {
        if x.len() != self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {}",
                self.spec.input_dim,
                x.len()
            )));
        }
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut inputs = Vec::with_capacity(layers.len());
        let mut cur = x.to_vec();
        for (k, lv) in layers.iter().enumerate() {
            let w = &self.data[lv.w..lv.b];
            let b = &self.data[lv.b..lv.b + lv.out];
            let mut y = b.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * lv.inp..(o + 1) * lv.inp];
                *yo += row.iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>();
            }
            if k != last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut cur, y));
        }
        Ok((cur.clone(), Cache { inputs, raw: cur }))
    }

    /// Beta parameters `(alpha, beta)` from an actor network.
    pub fn beta_params(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Cache)> {
        let Head::Beta { actions } = self.spec.head else {
            return Err(Error::ShapeMismatch("beta_params called on a value network".into()));
        };
        let (raw, cache) = self.forward_raw(x)?;
        let alpha = raw[..actions].iter().map(|&z| softplus(z) + 1.0).collect();
        let beta = raw[actions..].iter().map(|&z| softplus(z) + 1.0).collect();
        Ok((alpha, beta, cache))
    }

    /// Scalar output of a value network.
    pub fn value(&self, x: &[f64]) -> Result<(f64, Cache)> {
        if self.spec.head != Head::Value {
            return Err(Error::ShapeMismatch("value called on an actor network".into()));
        }
        let (raw, cache) = self.forward_raw(x)?;
        Ok((raw[0], cache))
    }

    /// Accumulates `d loss / d params` into `grads` and returns
    /// `d loss / d input`.
    ///
    /// `out_grad` is taken w.r.t. the head outputs: `(alpha, beta)` for a Beta
    /// head, the value for a value head.
    pub fn backward(&self, cache: &Cache, out_grad: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        let width = self.spec.head.width();
        if out_grad.len() != width || cache.raw.len() != width || grads.len() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "backward: output grad {} / cache {} / grads {} vs net ({width}, {})",
                out_grad.len(),
                cache.raw.len(),
                grads.len(),
                self.data.len()
            )));
        }
        let mut delta: Vec<f64> = match self.spec.head {
            Head::Beta { .. } => out_grad.iter().zip(&cache.raw).map(|(g, &z)| g * sigmoid(z)).collect(),
            Head::Value => out_grad.to_vec(),
        };
        let layers = self.layers();
        for (k, lv) in layers.iter().enumerate().rev() {
            let input = &cache.inputs[k];
            let w = &self.data[lv.w..lv.b];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads[lv.b + o] += d;
                let gw = &mut grads[lv.w + o * lv.inp..lv.w + (o + 1) * lv.inp];
                for (g, x) in gw.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let mut prev = vec![0.0; lv.inp];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * lv.inp..(o + 1) * lv.inp];
                for (p, wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            if k > 0 {
                // input to layer k is tanh output of layer k-1
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}

/// Row-major `rows x cols` matrix with orthonormal rows or columns scaled
/// by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(gain * q[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_input(rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..12).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn orthogonal_init_properties() {
        let p = NetParams::init_orthogonal(MlpSpec::actor(), 1);
        let (r, c, w) = p.weight(1);
        assert_eq!((r, c), (64, 64));
        let w = DMatrix::from_row_slice(r, c, w);
        let gram = &w * w.transpose() - DMatrix::identity(64, 64) * 2.0;
        assert!(gram.amax() < 1e-9);
        let (r, c, w) = p.weight(0);
        let w = DMatrix::from_row_slice(r, c, w);
        assert!((w.transpose() * &w - DMatrix::identity(12, 12) * 2.0).amax() < 1e-9);
        let (r, c, w) = p.weight(2);
        let w = DMatrix::from_row_slice(r, c, w);
        assert!((&w * w.transpose() - DMatrix::identity(8, 8) * 1e-4).amax() < 1e-12);
        for k in 0..3 {
            assert!(p.bias(k).iter().all(|&b| b == 0.0));
        }
        assert_eq!(p, NetParams::init_orthogonal(MlpSpec::actor(), 1));
        assert_ne!(p, NetParams::init_orthogonal(MlpSpec::actor(), 2));
        let c = NetParams::init_orthogonal(MlpSpec::critic(), 1);
        let (_, _, w) = c.weight(2);
        let n: f64 = w.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_network_outputs() {
        let a = NetParams::zeros(MlpSpec::actor());
        let (alpha, beta, _) = a.beta_params(&[0.3; 12]).unwrap();
        let want = 2f64.ln() + 1.0;
        assert!(alpha.iter().chain(&beta).all(|&v| (v - want).abs() < 1e-15));
        let c = NetParams::zeros(MlpSpec::critic());
        assert_eq!(c.value(&[1.0; 12]).unwrap().0, 0.0);
    }

    #[test]
    fn beta_outputs_exceed_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = NetParams::init_orthogonal(MlpSpec::actor(), 3);
        // exaggerate the output layer so the softplus saturates both ways
        a.as_mut_slice().iter_mut().for_each(|w| *w *= 40.0);
        for _ in 0..1000 {
            let (alpha, beta, _) = a.beta_params(&random_input(&mut rng)).unwrap();
            assert!(alpha.iter().chain(&beta).all(|&v| v > 1.0));
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(3.0) - (1.0 + 3f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn input_shape_checked() {
        let a = NetParams::zeros(MlpSpec::actor());
        assert!(a.forward_raw(&[0.0; 11]).is_err());
        let (_, cache) = a.forward_raw(&[0.0; 12]).unwrap();
        let mut g = vec![0.0; a.len()];
        assert!(a.backward(&cache, &[1.0], &mut g).is_err());
        assert!(NetParams::from_flat(MlpSpec::critic(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_param_grad() {
        let a = NetParams::init_orthogonal(MlpSpec::actor(), 9);
        let (_, cache) = a.forward_raw(&[0.5; 12]).unwrap();
        let mut g = vec![0.0; a.len()];
        a.backward(&cache, &[0.0; 8], &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = NetParams::init_orthogonal(MlpSpec::critic(), 4);
        // break the zero-bias symmetry so every parameter is exercised
        for v in c.as_mut_slice().iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        let x = random_input(&mut rng);
        let (_, cache) = c.value(&x).unwrap();
        let mut g = vec![0.0; c.len()];
        let gx = c.backward(&cache, &[1.0], &mut g).unwrap();
        let h = 1e-6;
        for i in 0..c.len() {
            let mut cp = c.clone();
            cp.as_mut_slice()[i] += h;
            let up = cp.value(&x).unwrap().0;
            cp.as_mut_slice()[i] -= 2.0 * h;
            let down = cp.value(&x).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-8);
            assert!((fd - g[i]).abs() / denom < 1e-5 || (fd - g[i]).abs() < 1e-9, "param {i}");
        }
        for j in 0..12 {
            let mut xp = x.clone();
            xp[j] += h;
            let up = c.value(&xp).unwrap().0;
            xp[j] -= 2.0 * h;
            let down = c.value(&xp).unwrap().0;
            assert!(((up - down) / (2.0 * h) - gx[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_scales_linearly() {
        let a = NetParams::init_orthogonal(MlpSpec::actor(), 5);
        let (_, cache) = a.forward_raw(&[0.2; 12]).unwrap();
        let og: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let mut g1 = vec![0.0; a.len()];
        a.backward(&cache, &og, &mut g1).unwrap();
        let scaled: Vec<f64> = og.iter().map(|v| 2.5 * v).collect();
        let mut g2 = vec![0.0; a.len()];
        a.backward(&cache, &scaled, &mut g2).unwrap();
        for (x, y) in g1.iter().zip(&g2) {
            assert!((2.5 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}
