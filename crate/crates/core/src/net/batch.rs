//! Minibatch forward and backward passes as matrix products.

use super::{sigmoid, softplus, Head, NetParams};
use crate::error::{Error, Result};

/// Activations of a batched forward pass, all row-major with one row per
/// sample.
#[derive(Debug, Clone)]
pub struct BatchCache {
    rows: usize,
    inputs: Vec<Vec<f64>>,
    raw: Vec<f64>,
}

impl BatchCache {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Raw outputs, `rows x head width`.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }
}

/// `c (m x n) = a (m x k) . b (k x n) + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    // SAFETY: every caller passes slices holding at least the extents
    // implied by (m, k, n) and the strides, and `c` is dense row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl NetParams {
    /// Forward pass over `rows` samples stored row-major in `x`.
    pub fn forward_batch(&self, x: &[f64], rows: usize) -> Result<BatchCache> {
        if rows == 0 || x.len() != rows * self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "batch of {rows} rows needs {} inputs, got {}",
                rows * self.spec.input_dim,
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
            let mut y: Vec<f64> = Vec::with_capacity(rows * lv.out);
            for _ in 0..rows {
                y.extend_from_slice(b);
            }
            // y += cur . W^T, with W stored out x in
            gemm(rows, lv.inp, lv.out, &cur, lv.inp, 1, w, 1, lv.inp, 1.0, &mut y);
            if k != last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut cur, y));
        }
        Ok(BatchCache { rows, inputs, raw: cur })
    }

    /// Per-row Beta parameters from a batched actor pass, `rows x actions`.
    pub fn beta_params_batch(&self, cache: &BatchCache) -> Result<(Vec<f64>, Vec<f64>)> {
        let Head::Beta { actions } = self.spec.head else {
            return Err(Error::ShapeMismatch("beta_params_batch called on a value network".into()));
        };
        let mut alpha = Vec::with_capacity(cache.rows * actions);
        let mut beta = Vec::with_capacity(cache.rows * actions);
        for row in cache.raw.chunks(2 * actions) {
            alpha.extend(row[..actions].iter().map(|&z| softplus(z) + 1.0));
            beta.extend(row[actions..].iter().map(|&z| softplus(z) + 1.0));
        }
        Ok((alpha, beta))
    }

    /// Accumulates parameter gradients for a whole batch into `grads`.
    ///
    /// `out_grad` is `rows x head width`, taken w.r.t. the head outputs as in
    /// [`NetParams::backward`].
    pub fn backward_batch(&self, cache: &BatchCache, out_grad: &[f64], grads: &mut [f64]) -> Result<()> {
        let rows = cache.rows;
        let width = self.spec.head.width();
        if out_grad.len() != rows * width || grads.len() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "batch backward: output grad {} for {rows} x {width}, grads {} vs {}",
                out_grad.len(),
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
            // dW (out x in) += delta^T . input
            gemm(lv.out, rows, lv.inp, &delta, 1, lv.out, input, lv.inp, 1, 1.0, &mut grads[lv.w..lv.b]);
            let gb = &mut grads[lv.b..lv.b + lv.out];
            for row in delta.chunks(lv.out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.data[lv.w..lv.b];
            let mut prev = vec![0.0; rows * lv.inp];
            gemm(rows, lv.out, lv.inp, &delta, lv.out, 1, w, lv.inp, 1, 0.0, &mut prev);
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::MlpSpec;
    use super::*;

    fn inputs(rows: usize) -> Vec<f64> {
        (0..rows * 12).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.8).collect()
    }

    #[test]
    fn batch_matches_per_sample() {
        for spec in [MlpSpec::actor(), MlpSpec::critic()] {
            let net = NetParams::init_orthogonal(spec.clone(), 5);
            let rows = 7;
            let x = inputs(rows);
            let cache = net.forward_batch(&x, rows).unwrap();
            let width = spec.head.width();
            let og: Vec<f64> = (0..rows * width).map(|i| (i as f64 * 0.3).cos()).collect();
            let mut gb = vec![0.0; net.len()];
            net.backward_batch(&cache, &og, &mut gb).unwrap();
            let mut gs = vec![0.0; net.len()];
            for r in 0..rows {
                let (raw, c) = net.forward_raw(&x[r * 12..(r + 1) * 12]).unwrap();
                for j in 0..width {
                    assert!((raw[j] - cache.raw()[r * width + j]).abs() < 1e-13);
                }
                net.backward(&c, &og[r * width..(r + 1) * width], &mut gs).unwrap();
            }
            for (a, b) in gb.iter().zip(&gs) {
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn batch_beta_params() {
        let net = NetParams::init_orthogonal(MlpSpec::actor(), 2);
        let x = inputs(3);
        let cache = net.forward_batch(&x, 3).unwrap();
        let (a, b) = net.beta_params_batch(&cache).unwrap();
        let (a1, b1, _) = net.beta_params(&x[12..24]).unwrap();
        for j in 0..4 {
            assert!((a[4 + j] - a1[j]).abs() < 1e-13 && (b[4 + j] - b1[j]).abs() < 1e-13);
        }
        assert!(net.forward_batch(&x, 2).is_err());
    }
}
