//! Primal active-set solver for small convex QPs of the form
//! `min 0.5 x'Hx + c'x  s.t.  Ex = e, x >= 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

// Above the round-off floor of the SVD KKT solve on a 16-variable problem.
const STEP_TOL: f64 = 1e-10;
const MULT_TOL: f64 = 1e-12;
const MAX_ITERS: usize = 500;

/// `h` must be symmetric positive definite and `x0` feasible.
pub(crate) fn solve(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    e: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = x0.len();
    let m = e.nrows();
    let mut x = x0.clone();
    let mut active: Vec<bool> = x.iter().map(|&v| v <= 0.0).collect();
    for i in 0..n {
        if active[i] {
            x[i] = 0.0;
        }
    }
    for _ in 0..MAX_ITERS {
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let g = h * &x + c;
        let p = eqp_step(h, &g, e, &free);
        if p.amax() <= STEP_TOL {
            // Bound multipliers from the stationarity condition on free rows.
            let lambda = if free.is_empty() || m == 0 {
                DVector::zeros(m)
            } else {
                let ef = DMatrix::from_fn(free.len(), m, |r, k| e[(k, free[r])]);
                let gf = DVector::from_fn(free.len(), |r, _| g[free[r]]);
                ef.svd(true, true)
                    .solve(&gf, 1e-12)
                    .map_err(|s| Error::Solver(s.into()))?
            };
            let mu = &g - e.transpose() * &lambda;
            let worst = (0..n)
                .filter(|&i| active[i])
                .min_by(|&a, &b| mu[a].total_cmp(&mu[b]));
            match worst {
                Some(i) if mu[i] < -MULT_TOL => active[i] = false,
                _ => return Ok(x),
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            if p[i] < 0.0 {
                let a = -x[i] / p[i];
                if a < alpha {
                    alpha = a;
                    blocking = Some(i);
                }
            }
        }
        x += alpha * &p;
        if let Some(i) = blocking {
            active[i] = true;
            x[i] = 0.0;
        }
    }
    Err(Error::Solver("active-set QP did not converge".into()))
}

/// Step on the free variables solving the equality-constrained subproblem
/// through its KKT system. The pseudo-inverse absorbs redundant rows of `E`.
fn eqp_step(h: &DMatrix<f64>, g: &DVector<f64>, e: &DMatrix<f64>, free: &[usize]) -> DVector<f64> {
    let n = h.nrows();
    let m = e.nrows();
    let k = free.len();
    let mut p = DVector::zeros(n);
    if k == 0 {
        return p;
    }
    let mut kkt = DMatrix::zeros(k + m, k + m);
    let mut rhs = DVector::zeros(k + m);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            kkt[(r, s)] = h[(i, j)];
        }
        for q in 0..m {
            kkt[(r, k + q)] = e[(q, i)];
            kkt[(k + q, r)] = e[(q, i)];
        }
        rhs[r] = -g[i];
    }
    let sol = kkt
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .expect("SVD computed with both singular-vector sets");
    for (r, &i) in free.iter().enumerate() {
        p[i] = sol[r];
    }
    p
}
