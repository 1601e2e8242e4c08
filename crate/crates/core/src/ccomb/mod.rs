//! Sparse convex-combination weights over the 16 vertices of the arm-length
//! hypercube.
//!
//! Given target lengths, find `chi >= 0` with `sum chi = 1` and
//! `sum chi_i l_i = l_tar` that maximizes `sum chi_i^2`, supported on at most
//! five vertices. [`solve_weights`] enumerates every small support exactly;
//! [`solve_weights_sqp`] runs a restarted local SQP solve of the same problem.

mod qp;
mod sqp;

pub use sqp::{solve_weights_sqp, SqpStats};

use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{ArmLengths, QuadParams};
use crate::error::Result;

pub const MODES: usize = 16;
/// Largest support any returned weight vector may have.
pub const MAX_SUPPORT: usize = 5;
/// Weights at or below this count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;
const NEG_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-12;

/// Arm pattern of mode `i` (0-based): mode bits read L1..L4 as the binary
/// digits of `i`, L1 most significant. `true` means a fully extended arm.
pub fn mode_bits(i: usize) -> [bool; 4] {
    std::array::from_fn(|j| (i >> (3 - j)) & 1 == 1)
}

/// Mode pattern as the four-character string used in labels, e.g. `0101`.
pub fn mode_label(i: usize) -> String {
    mode_bits(i).iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// The 16 vertex arm configurations in mode order.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    vertices: [ArmLengths; MODES],
}

impl VertexSet {
    pub fn new(p: &QuadParams) -> Self {
        let vertices = std::array::from_fn(|i| {
            ArmLengths(mode_bits(i).map(|b| if b { p.l_max } else { p.l_min }))
        });
        Self { vertices }
    }

    pub fn vertex(&self, mode: usize) -> ArmLengths {
        self.vertices[mode]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArmLengths> {
        self.vertices.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightVector(pub [f64; MODES]);

impl WeightVector {
    pub fn indicator(mode: usize) -> Self {
        let mut w = [0.0; MODES];
        w[mode] = 1.0;
        Self(w)
    }

    /// Indices with weight above [`ZERO_THRESHOLD`], ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..MODES).filter(|&i| self.0[i] > ZERO_THRESHOLD).collect()
    }

    pub fn objective(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }
}

/// Affine map of lengths onto the unit cube.
///
/// Coordinates within a few ulps of 0, 1/2 or 1 are snapped there, so that
/// decimal inputs like 0.20 on a [0.15, 0.25] range land on the exact center.
pub fn normalize_lengths(p: &QuadParams, l: &ArmLengths) -> Result<[f64; 4]> {
    l.check(p)?;
    Ok(l.0.map(|x| {
        let t = ((x - p.l_min) / (p.l_max - p.l_min)).clamp(0.0, 1.0);
        [0.0, 0.5, 1.0]
            .into_iter()
            .find(|c| (t - c).abs() <= 8.0 * f64::EPSILON)
            .unwrap_or(t)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyReport {
    /// `|sum chi - 1|`.
    pub sum_violation: f64,
    /// `max_j |sum_i chi_i l_ij - l_tar_j|` in meters.
    pub reconstruction_error: f64,
    pub min_weight: f64,
    pub support: usize,
}

impl VerifyReport {
    /// Whether the weights are a valid sparse convex combination at `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.sum_violation <= tol
            && self.reconstruction_error <= tol
            && self.min_weight >= 0.0
            && self.support <= MAX_SUPPORT
    }
}

pub fn verify_weights(p: &QuadParams, chi: &WeightVector, l_tar: &ArmLengths) -> VerifyReport {
    let vs = VertexSet::new(p);
    let sum: f64 = chi.0.iter().sum();
    let mut recon = [0.0; 4];
    for (w, v) in chi.0.iter().zip(vs.iter()) {
        for j in 0..4 {
            recon[j] += w * v.0[j];
        }
    }
    let reconstruction_error = (0..4).map(|j| (recon[j] - l_tar.0[j]).abs()).fold(0.0, f64::max);
    VerifyReport {
        sum_violation: (sum - 1.0).abs(),
        reconstruction_error,
        min_weight: chi.0.iter().copied().fold(f64::INFINITY, f64::min),
        support: chi.support().len(),
    }
}

/// Every vertex subset of size 1..=5 in lexicographic order within each size.
static SUBSETS: LazyLock<Vec<Vec<usize>>> = LazyLock::new(|| {
    let mut out = Vec::with_capacity(6884);
    for k in 1..=MAX_SUPPORT {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.clone());
            let mut i = k;
            while i > 0 && idx[i - 1] == MODES - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
});

pub fn subset_count() -> usize {
    SUBSETS.len()
}

/// Constraint row `j < 4` is the bit of arm `j`; row 4 is all ones.
fn constraint(mode: usize, row: usize) -> f64 {
    if row == 4 || mode_bits(mode)[row] {
        1.0
    } else {
        0.0
    }
}

/// Target-independent data for one subset: constraint columns, the Gram
/// matrix, and an SVD pseudo-inverse (`k x 5`) when the Gram matrix fails
/// elimination.
struct Prepared {
    cols: Vec<[f64; 5]>,
    gram: [[f64; MAX_SUPPORT + 1]; MAX_SUPPORT],
    pinv: Option<DMatrix<f64>>,
}

static PREPARED: LazyLock<Vec<Prepared>> = LazyLock::new(|| {
    SUBSETS
        .iter()
        .map(|subset| {
            let k = subset.len();
            let cols: Vec<[f64; 5]> = subset.iter().map(|&i| std::array::from_fn(|row| constraint(i, row))).collect();
            let mut gram = [[0.0f64; MAX_SUPPORT + 1]; MAX_SUPPORT];
            for r in 0..k {
                for c in 0..k {
                    gram[r][c] = (0..5).map(|row| cols[r][row] * cols[c][row]).sum();
                }
            }
            let pinv = gauss_solve(&mut gram.clone(), k).is_none().then(|| {
                let a = DMatrix::from_fn(5, k, |row, c| cols[c][row]);
                a.pseudo_inverse(1e-12).expect("non-negative tolerance")
            });
            Prepared { cols, gram, pinv }
        })
        .collect()
});

/// Least-squares weights on the `n`-th subset reproducing the unit-cube
/// target `t`. Full-rank subsets go through the normal equations;
/// rank-deficient ones use the SVD pseudo-inverse.
fn subset_solution(n: usize, t: &[f64; 4]) -> Vec<f64> {
    let prep = &PREPARED[n];
    let b = [t[0], t[1], t[2], t[3], 1.0];
    if let Some(pinv) = &prep.pinv {
        return (pinv * DVector::from_row_slice(&b)).iter().copied().collect();
    }
    let k = prep.cols.len();
    let mut m = prep.gram;
    for r in 0..k {
        m[r][k] = (0..5).map(|row| prep.cols[r][row] * b[row]).sum();
    }
    gauss_solve(&mut m, k).expect("full-rank subset")
}

/// Gaussian elimination with partial pivoting on the augmented `k x (k+1)`
/// system; `None` when a pivot vanishes.
fn gauss_solve(m: &mut [[f64; MAX_SUPPORT + 1]; MAX_SUPPORT], k: usize) -> Option<Vec<f64>> {
    for col in 0..k {
        let piv = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-9 {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..=k {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let mut acc = m[r][k];
        for c in r + 1..k {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    Some(x)
}

fn residual(n: usize, x: &[f64], t: &[f64; 4]) -> f64 {
    let b = [t[0], t[1], t[2], t[3], 1.0];
    let cols = &PREPARED[n].cols;
    (0..5)
        .map(|row| {
            let ax: f64 = cols.iter().zip(x).map(|(c, xi)| c[row] * xi).sum();
            (ax - b[row]).abs()
        })
        .fold(0.0, f64::max)
}

/// Globally optimal sparse weights by exhaustive support enumeration.
///
/// Ties in the objective go to the lexicographically smallest support.
pub fn solve_weights(p: &QuadParams, l_tar: &ArmLengths) -> Result<WeightVector> {
    let t = normalize_lengths(p, l_tar)?;
    let mut best: Option<(f64, Vec<usize>, WeightVector)> = None;
    for (n, subset) in SUBSETS.iter().enumerate() {
        let x = subset_solution(n, &t);
        if x.iter().any(|&v| !v.is_finite() || v < -NEG_TOL) || residual(n, &x, &t) > FEAS_TOL {
            continue;
        }
        let mut w = [0.0; MODES];
        for (&i, &v) in subset.iter().zip(&x) {
            w[i] = v.max(0.0);
        }
        let w = WeightVector(w);
        let obj = w.objective();
        let support = w.support();
        let better = match &best {
            None => true,
            Some((b, s, _)) => obj > b + TIE_TOL || ((obj - b).abs() <= TIE_TOL && support < *s),
        };
        if better {
            best = Some((obj, support, w));
        }
    }
    // The cube is the convex hull of its vertices, so some subset is feasible.
    Ok(best.expect("in-bounds target has a feasible vertex combination").2)
}

/// Weights of the multilinear (tensor-product) interpolation at unit-cube
/// coordinates `t`. Always feasible, usually dense.
pub fn multilinear_weights(t: &[f64; 4]) -> WeightVector {
    WeightVector(std::array::from_fn(|i| {
        mode_bits(i)
            .iter()
            .zip(t)
            .map(|(&b, &tj)| if b { tj } else { 1.0 - tj })
            .product()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QuadParams {
        QuadParams::default()
    }

    #[test]
    fn mode_order_follows_binary_labels() {
        assert_eq!(mode_label(0), "0000");
        assert_eq!(mode_label(1), "0001");
        assert_eq!(mode_label(2), "0010");
        assert_eq!(mode_label(8), "1000");
        assert_eq!(mode_label(15), "1111");
        let vs = VertexSet::new(&params());
        assert_eq!(vs.vertex(8).0, [0.25, 0.15, 0.15, 0.15]);
        let mut all: Vec<String> = (0..16).map(mode_label).collect();
        all.dedup();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn normalize_examples() {
        let p = params();
        assert_eq!(normalize_lengths(&p, &ArmLengths::uniform(0.15)).unwrap(), [0.0; 4]);
        assert_eq!(normalize_lengths(&p, &ArmLengths::uniform(0.25)).unwrap(), [1.0; 4]);
        let t = normalize_lengths(&p, &ArmLengths::uniform(0.20)).unwrap();
        assert_eq!(t, [0.5; 4]);
        assert!(normalize_lengths(&p, &ArmLengths([0.3, 0.2, 0.2, 0.2])).is_err());
    }

    #[test]
    fn subset_enumeration_size() {
        assert_eq!(subset_count(), 16 + 120 + 560 + 1820 + 4368);
    }

    #[test]
    fn vertex_and_center_targets() {
        let p = params();
        let w = solve_weights(&p, &ArmLengths::uniform(0.15)).unwrap();
        assert_eq!(w, WeightVector::indicator(0));
        let w = solve_weights(&p, &ArmLengths::uniform(0.20)).unwrap();
        assert_eq!(w.objective(), 0.5);
        assert_eq!(w.support(), vec![0, 15]);
        let w = solve_weights(&p, &ArmLengths([0.20, 0.15, 0.15, 0.15])).unwrap();
        assert_eq!(w.support(), vec![0, 8]);
        assert!((w.0[0] - 0.5).abs() < 1e-12 && (w.0[8] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn verify_examples() {
        let p = params();
        let vs = VertexSet::new(&p);
        let r = verify_weights(&p, &WeightVector::indicator(5), &vs.vertex(5));
        assert_eq!(r.sum_violation, 0.0);
        assert_eq!(r.reconstruction_error, 0.0);
        assert_eq!(r.support, 1);
        let uniform = WeightVector([1.0 / 16.0; 16]);
        let r = verify_weights(&p, &uniform, &ArmLengths::uniform(0.2));
        assert!(r.reconstruction_error < 1e-15);
        assert_eq!(r.support, 16);
        assert!(!r.passes(1e-8));
        let mut w = WeightVector::indicator(3);
        w.0[3] += 1e-3;
        let r = verify_weights(&p, &w, &vs.vertex(3));
        assert!((r.sum_violation - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn multilinear_is_feasible() {
        let p = params();
        let l = ArmLengths([0.17, 0.22, 0.151, 0.249]);
        let t = normalize_lengths(&p, &l).unwrap();
        let r = verify_weights(&p, &multilinear_weights(&t), &l);
        assert!(r.sum_violation < 1e-14 && r.reconstruction_error < 1e-14);
    }
}
