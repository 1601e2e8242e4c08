use super::Transition;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    /// Critic regression targets `V(s) + A`.
    pub targets: Vec<f64>,
}

/// Generalized advantage estimates over an ordered batch.
///
/// `values[t] = V(s_t)` and `next_values[t] = V(s'_t)`. Crashes are
/// terminal (no bootstrap); time-limit ends keep the `V(s')` bootstrap.
/// Both stop the backward recursion, as does the end of the batch.
pub fn compute_gae(
    batch: &[Transition],
    values: &[f64],
    next_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<Advantages> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("GAE needs at least one transition".into()));
    }
    if values.len() != batch.len() || next_values.len() != batch.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} transitions, {} values, {} next values",
            batch.len(),
            values.len(),
            next_values.len()
        )));
    }
    let n = batch.len();
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let tr = &batch[t];
        let bootstrap = if tr.crashed { 0.0 } else { next_values[t] };
        let delta = tr.r + gamma * bootstrap - values[t];
        let keep = if tr.done() || t + 1 == n { 0.0 } else { 1.0 };
        carry = delta + gamma * lambda * keep * carry;
        advantages[t] = carry;
    }
    let targets = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(Advantages { advantages, targets })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(r: f64, crashed: bool, timed_out: bool) -> Transition {
        Transition {
            s: [0.0; 12],
            a0: [0.5; 4],
            logp_old: 0.0,
            r,
            s_next: [0.0; 12],
            crashed,
            timed_out,
        }
    }

    #[test]
    fn single_terminal_step() {
        let out = compute_gae(&[tr(2.0, true, false)], &[0.7], &[5.0], 0.99, 0.95).unwrap();
        assert_eq!(out.advantages, vec![2.0 - 0.7]);
        assert_eq!(out.targets, vec![2.0]);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let batch = [tr(1.0, false, false), tr(0.5, false, false), tr(-1.0, false, true)];
        let v = [0.1, 0.2, 0.3];
        let nv = [0.2, 0.3, 0.9];
        let out = compute_gae(&batch, &v, &nv, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert_eq!(out.advantages[t], batch[t].r + 0.9 * nv[t] - v[t]);
        }
    }

    #[test]
    fn time_limit_bootstraps_crash_does_not() {
        let out = compute_gae(&[tr(1.0, false, true)], &[0.0], &[10.0], 0.5, 0.95).unwrap();
        assert_eq!(out.advantages[0], 6.0);
        let out = compute_gae(&[tr(1.0, true, true)], &[0.0], &[10.0], 0.5, 0.95).unwrap();
        assert_eq!(out.advantages[0], 1.0);
    }

    #[test]
    fn empty_and_misaligned() {
        assert!(compute_gae(&[], &[], &[], 0.9, 0.9).is_err());
        assert!(compute_gae(&[tr(1.0, false, false)], &[0.0, 1.0], &[0.0], 0.9, 0.9).is_err());
    }
}
