use crate::error::{Error, Result};
use crate::policy::{entropy, entropy_grad, log_density_grad, BetaParams};

/// Minibatch actor loss and its gradient w.r.t. each sample's Beta
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub mean_entropy: f64,
    /// Per sample `(d loss / d alpha, d loss / d beta)`.
    pub grads: Vec<(Vec<f64>, Vec<f64>)>,
    /// Fraction of samples whose clipped branch was selected.
    pub clip_fraction: f64,
}

/// `-mean[min(r A, clip(r, 1-eps, 1+eps) A) + c H]` with
/// `r = exp(logp_new - logp_old)`.
pub fn actor_loss(
    params: &[BetaParams],
    actions: &[[f64; 4]],
    logp_old: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<ActorLoss> {
    let n = params.len();
    if n == 0 || actions.len() != n || logp_old.len() != n || advantages.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "actor loss: {n} params, {} actions, {} logp, {} advantages",
            actions.len(),
            logp_old.len(),
            advantages.len()
        )));
    }
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    let mut ent_total = 0.0;
    let mut clipped = 0usize;
    let mut grads = Vec::with_capacity(n);
    for i in 0..n {
        let bp = &params[i];
        let a0 = &actions[i];
        let logp = crate::policy::log_density(bp, a0)?;
        let ratio = (logp - logp_old[i]).exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite("probability ratio"));
        }
        let adv = advantages[i];
        let unclipped = ratio * adv;
        let clip_term = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
        // d surrogate / d logp: r A on the unclipped branch, 0 when the clip binds
        let (surr, dsurr) = if unclipped <= clip_term {
            (unclipped, unclipped)
        } else {
            clipped += 1;
            (clip_term, 0.0)
        };
        let h = entropy(bp);
        total += surr + entropy_coef * h;
        ent_total += h;

        let (la, lb) = log_density_grad(bp, a0);
        let (ha, hb) = entropy_grad(bp);
        let ga = la.iter().zip(&ha).map(|(l, e)| -scale * (dsurr * l + entropy_coef * e)).collect();
        let gb = lb.iter().zip(&hb).map(|(l, e)| -scale * (dsurr * l + entropy_coef * e)).collect();
        grads.push((ga, gb));
    }
    Ok(ActorLoss {
        loss: -total * scale,
        mean_entropy: ent_total * scale,
        grads,
        clip_fraction: clipped as f64 * scale,
    })
}

/// Mean squared error and its gradient w.r.t. the predictions.
pub fn critic_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "critic loss: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(v, t)| (t - v).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(v, t)| 2.0 * (v - t) / n).collect();
    Ok((loss, grad))
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp() -> BetaParams {
        BetaParams::new(vec![2.0, 3.0, 1.5, 4.0], vec![2.5, 1.2, 3.0, 4.0]).unwrap()
    }

    const A0: [f64; 4] = [0.4, 0.7, 0.2, 0.5];

    fn logp() -> f64 {
        crate::policy::log_density(&bp(), &A0).unwrap()
    }

    #[test]
    fn ratio_one_gives_advantage() {
        let out = actor_loss(&[bp()], &[A0], &[logp()], &[0.8], 0.2, 0.0).unwrap();
        assert!((out.loss + 0.8).abs() < 1e-12);
    }

    #[test]
    fn clipping_branches() {
        // ratio 1.5 with positive advantage: clip at 1.2
        let old = logp() - 1.5f64.ln();
        let out = actor_loss(&[bp()], &[A0], &[old], &[2.0], 0.2, 0.0).unwrap();
        assert!((out.loss + 1.2 * 2.0).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 1.0);
        assert!(out.grads[0].0.iter().all(|&g| g == 0.0));
        // ratio 0.5 with negative advantage: min(0.5A, 0.8A) = 0.8A
        let old = logp() - 0.5f64.ln();
        let out = actor_loss(&[bp()], &[A0], &[old], &[-1.0], 0.2, 0.0).unwrap();
        assert!((out.loss - 0.8).abs() < 1e-12);
    }

    #[test]
    fn surrogate_lower_bounds_unclipped() {
        for k in 0..200 {
            let ratio = 0.3 + k as f64 * 0.01;
            for adv in [-2.0, -0.1, 0.0, 0.5, 3.0] {
                let old = logp() - ratio.ln();
                let out = actor_loss(&[bp()], &[A0], &[old], &[adv], 0.2, 0.0).unwrap();
                assert!(-out.loss <= ratio * adv + 1e-12);
            }
        }
    }

    #[test]
    fn zero_advantage_leaves_entropy_gradient() {
        let out = actor_loss(&[bp()], &[A0], &[logp()], &[0.0], 0.2, 0.01).unwrap();
        let (ha, hb) = entropy_grad(&bp());
        for j in 0..4 {
            assert!((out.grads[0].0[j] + 0.01 * ha[j]).abs() < 1e-15);
            assert!((out.grads[0].1[j] + 0.01 * hb[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn critic_examples() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        let (l, g) = critic_loss(&[0.0, 0.0], &[1.0, -1.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![-1.0, 1.0]);
        assert!(critic_loss(&[], &[]).is_err());
        assert!(critic_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn critic_gradient_finite_difference() {
        let pred = [0.3, -1.2, 2.2];
        let target = [1.0, 0.4, -0.5];
        let (_, g) = critic_loss(&pred, &target).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut p = pred;
            p[i] += h;
            let up = critic_loss(&p, &target).unwrap().0;
            p[i] -= 2.0 * h;
            let down = critic_loss(&p, &target).unwrap().0;
            assert!(((up - down) / (2.0 * h) - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn normalization_moments() {
        let mut a: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin() * 5.0 + 2.0).collect();
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-9);
    }
}
