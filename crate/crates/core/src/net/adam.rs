#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, eps: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// # Panics
    ///
    /// If `params`, `grads` and the moment buffers differ in length.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len(), "adam: params/grads length mismatch");
        assert_eq!(params.len(), self.m.len(), "adam: state/params length mismatch");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grads` to global L2 norm `max_norm` when it is larger.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut a = AdamState::new(3, 1e-5);
        let mut p = vec![1.0, -2.0, 3.0];
        a.step(&mut p, &[0.0; 3], 0.1);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_about_lr() {
        let mut a = AdamState::new(1, 1e-5);
        let mut p = vec![0.0];
        let g = 0.37;
        a.step(&mut p, &[g], 3e-5);
        let want = 3e-5 * g / (g + 1e-5);
        assert!((p[0] + want).abs() < 1e-18);
        assert!((p[0].abs() - 3e-5).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut a = AdamState::new(2, 1e-5);
            let mut p = vec![0.5, 0.25];
            for k in 0..50 {
                let g = [p[0] * 2.0 + k as f64 * 0.01, -p[1]];
                a.step(&mut p, &g, 1e-2);
            }
            p
        };
        let (x, y) = (run(), run());
        assert_eq!(x[0].to_bits(), y[0].to_bits());
        assert_eq!(x[1].to_bits(), y[1].to_bits());
    }

    #[test]
    fn clipping() {
        let mut g = vec![1.2, 1.6];
        assert!((clip_grad_norm(&mut g, 0.5) - 2.0).abs() < 1e-15);
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 0.5).abs() < 1e-15);
        let cos = (g[0] * 1.2 + g[1] * 1.6) / (0.5 * 2.0);
        assert!((cos - 1.0).abs() < 1e-12);

        let mut g = vec![0.18, 0.24];
        clip_grad_norm(&mut g, 0.5);
        assert_eq!(g, vec![0.18, 0.24]);
    }
}
