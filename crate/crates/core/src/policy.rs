//! Independent-Beta policy over normalized rotor speeds.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::dynamics::RotorSpeeds;
use crate::error::{Error, Result};
use crate::net::special::{ln_beta, psi, psi1};

/// Samples are kept this far from the support edges before taking logs.
pub const EDGE_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    /// Normalized action in `(0, 1)` per rotor.
    pub a0: Vec<f64>,
    pub log_prob: f64,
    pub speeds: RotorSpeeds,
}

impl BetaParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::ShapeMismatch(format!("{} alphas vs {} betas", alpha.len(), beta.len())));
        }
        if alpha.iter().chain(&beta).any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidArgument("Beta parameters must be finite and positive".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn dims(&self) -> usize {
        self.alpha.len()
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.alpha.iter().copied().zip(self.beta.iter().copied())
    }
}

fn speeds_from(a0: &[f64], n_max: f64) -> RotorSpeeds {
    let mut n = [0.0; 4];
    for (dst, a) in n.iter_mut().zip(a0) {
        *dst = a * n_max;
    }
    RotorSpeeds(n)
}

/// Draws one action, each dimension independently from its Beta.
pub fn sample<R: Rng + ?Sized>(bp: &BetaParams, n_max: f64, rng: &mut R) -> ActionSample {
    let a0: Vec<f64> = bp
        .pairs()
        .map(|(a, b)| {
            let d = Beta::new(a, b).expect("Beta parameters validated positive");
            d.sample(rng).clamp(EDGE_CLAMP, 1.0 - EDGE_CLAMP)
        })
        .collect();
    let log_prob = log_density_unchecked(bp, &a0);
    let speeds = speeds_from(&a0, n_max);
    ActionSample { a0, log_prob, speeds }
}

fn log_density_unchecked(bp: &BetaParams, a0: &[f64]) -> f64 {
    bp.pairs()
        .zip(a0)
        .map(|((a, b), &x)| (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b))
        .sum()
}

/// Joint log-density of `a0` under the product of Betas.
pub fn log_density(bp: &BetaParams, a0: &[f64]) -> Result<f64> {
    if a0.len() != bp.dims() {
        return Err(Error::ShapeMismatch(format!("{} actions for {} dims", a0.len(), bp.dims())));
    }
    if a0.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::InvalidArgument("Beta density is evaluated on the open interval (0, 1)".into()));
    }
    Ok(log_density_unchecked(bp, a0))
}

/// `(d logp / d alpha, d logp / d beta)`.
pub fn log_density_grad(bp: &BetaParams, a0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut da = Vec::with_capacity(bp.dims());
    let mut db = Vec::with_capacity(bp.dims());
    for ((a, b), &x) in bp.pairs().zip(a0) {
        let common = psi(a + b);
        da.push(x.ln() - psi(a) + common);
        db.push((-x).ln_1p() - psi(b) + common);
    }
    (da, db)
}

/// Differential entropy of the product distribution.
pub fn entropy(bp: &BetaParams) -> f64 {
    bp.pairs()
        .map(|(a, b)| ln_beta(a, b) - (a - 1.0) * psi(a) - (b - 1.0) * psi(b) + (a + b - 2.0) * psi(a + b))
        .sum()
}

/// `(d H / d alpha, d H / d beta)`.
pub fn entropy_grad(bp: &BetaParams) -> (Vec<f64>, Vec<f64>) {
    let mut da = Vec::with_capacity(bp.dims());
    let mut db = Vec::with_capacity(bp.dims());
    for (a, b) in bp.pairs() {
        let shared = (a + b - 2.0) * psi1(a + b);
        da.push(shared - (a - 1.0) * psi1(a));
        db.push(shared - (b - 1.0) * psi1(b));
    }
    (da, db)
}

/// Deterministic test-time action: the Beta mean scaled to rpm.
pub fn mean_action(bp: &BetaParams, n_max: f64) -> RotorSpeeds {
    let mean: Vec<f64> = bp.pairs().map(|(a, b)| a / (a + b)).collect();
    speeds_from(&mean, n_max)
}
