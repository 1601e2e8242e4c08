//! Restarted SQP solve of the sparse-weight problem.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{constraint, multilinear_weights, normalize_lengths, WeightVector, MAX_SUPPORT, MODES, ZERO_THRESHOLD};
use crate::dynamics::{ArmLengths, QuadParams};
use crate::error::{Error, Result};

pub const MAX_RESTARTS: usize = 1000;
const MAX_ITERS: usize = 200;
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpStats {
    pub restarts: usize,
    /// SQP iterations summed over all restarts.
    pub iterations: usize,
}

/// Local maximizer of `sum chi^2` from random starts, restarting while the
/// support exceeds five vertices.
pub fn solve_weights_sqp(p: &QuadParams, l_tar: &ArmLengths, seed: u64) -> Result<(WeightVector, SqpStats)> {
    let t = normalize_lengths(p, l_tar)?;
    let e = DMatrix::from_fn(5, MODES, |row, i| constraint(i, row));
    let feasible = DVector::from_row_slice(&multilinear_weights(&t).0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = 0;
    for restart in 0..MAX_RESTARTS {
        let mut x0 = DVector::from_fn(MODES, |_, _| rng.random::<f64>());
        x0 /= x0.sum();
        let (x, iters) = sqp_run(&e, x0, &feasible)?;
        iterations += iters;
        let mut w = [0.0; MODES];
        for i in 0..MODES {
            w[i] = if x[i] > ZERO_THRESHOLD { x[i] } else { 0.0 };
        }
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        let w = WeightVector(w);
        if w.support().len() <= MAX_SUPPORT {
            return Ok((w, SqpStats { restarts: restart, iterations }));
        }
    }
    Err(Error::Solver(format!("no sparse solution after {MAX_RESTARTS} restarts")))
}

fn sqp_run(
    e: &DMatrix<f64>,
    mut x: DVector<f64>,
    feasible: &DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let n = x.len();
    let mut hess = DMatrix::<f64>::identity(n, n);
    let mut is_feasible = false;
    for iter in 0..MAX_ITERS {
        // Objective f = -sum chi^2; the constraints are linear, so the
        // subproblem constraints are the originals evaluated at y = x + d.
        let grad = -2.0 * &x;
        let c = &grad - &hess * &x;
        let start = if is_feasible { x.clone() } else { feasible.clone() };
        let y = super::qp::solve(&hess, &c, e, &start)?;
        let d = &y - &x;
        x = y;
        is_feasible = true;
        if d.amax() < STEP_TOL {
            return Ok((x, iter + 1));
        }
        // The objective is concave, so the full step is always a descent
        // step along feasible directions and no line search is needed.
        // Damped BFGS keeps the model Hessian positive definite.
        let y_grad = -2.0 * &d;
        let bs = &hess * &d;
        let sbs = d.dot(&bs);
        let sy = d.dot(&y_grad);
        let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
        let r = theta * &y_grad + (1.0 - theta) * &bs;
        let sr = d.dot(&r);
        if sr <= 1e-8 * d.dot(&d) {
            hess = DMatrix::identity(n, n);
        } else {
            hess = &hess - &bs * bs.transpose() / sbs + &r * r.transpose() / sr;
        }
    }
    Ok((x, MAX_ITERS))
}

#[cfg(test)]
mod tests {
    use super::super::{solve_weights, verify_weights};
    use super::*;

    #[test]
    fn vertices_are_recovered() {
        let p = QuadParams::default();
        let vs = super::super::VertexSet::new(&p);
        for mode in [0, 6, 15] {
            let (w, _) = solve_weights_sqp(&p, &vs.vertex(mode), 7).unwrap();
            assert_eq!(w.support(), vec![mode]);
        }
    }

    #[test]
    fn feasible_and_no_better_than_enumeration() {
        let p = QuadParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..20 {
            let l = ArmLengths(std::array::from_fn(|_| rng.random_range(p.l_min..=p.l_max)));
            let (w, _) = solve_weights_sqp(&p, &l, k).unwrap();
            let rep = verify_weights(&p, &w, &l);
            assert!(rep.passes(1e-8), "{rep:?}");
            let best = solve_weights(&p, &l).unwrap();
            assert!(w.objective() <= best.objective() + 1e-9);
        }
    }
}
