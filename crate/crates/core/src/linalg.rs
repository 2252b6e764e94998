//! Dense SVD helpers: numerical rank, minimum-norm least squares, null spaces.
//!
//! Factorizations go through faer; nalgebra's own SVD loses accuracy on the
//! wide, rank-deficient systems the constraint engine builds.

use faer::Mat;
use nalgebra::{DMatrix, DVector};

/// Singular values below `σ_max · max(max(rows, cols)·ε, floor)` count as zero.
pub fn rank_threshold(sigma_max: f64, rows: usize, cols: usize, floor: f64) -> f64 {
    sigma_max * ((rows.max(cols) as f64) * f64::EPSILON).max(floor)
}

/// Full SVD `m = U diag(s) Vᵀ`, with `s` in nonincreasing order.
struct Decomposition {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

fn decompose(m: &DMatrix<f64>) -> Decomposition {
    let (r, c) = m.shape();
    let a = Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = a.svd().expect("SVD of a finite matrix converges");
    let (u, v) = (svd.U(), svd.V());
    let sv = svd.S().column_vector();
    Decomposition {
        u: DMatrix::from_fn(r, r, |i, j| u[(i, j)]),
        s: (0..r.min(c)).map(|k| sv[k]).collect(),
        v: DMatrix::from_fn(c, c, |i, j| v[(i, j)]),
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let (r, c) = m.shape();
    let a = Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let sv = a.singular_values().expect("SVD of a finite matrix converges");
    let mut sv: Vec<f64> = sv.into_iter().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

pub fn numerical_rank(m: &DMatrix<f64>, floor: f64) -> usize {
    let sv = singular_values(m);
    let Some(&smax) = sv.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    let tau = rank_threshold(smax, m.nrows(), m.ncols(), floor);
    sv.iter().filter(|s| **s > tau).count()
}

#[derive(Debug, Clone)]
pub struct Lstsq {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub rank: usize,
    pub nullity: usize,
}

/// Minimum-norm least-squares solution of `m x ≈ b` via a truncated SVD.
pub fn lstsq_min_norm(m: &DMatrix<f64>, b: &DVector<f64>, floor: f64) -> Lstsq {
    let (r, c) = m.shape();
    assert_eq!(r, b.len(), "right-hand side length must match row count");
    if r == 0 || c == 0 {
        return Lstsq { x: DVector::zeros(c), residual: -b.clone(), rank: 0, nullity: c };
    }
    let d = decompose(m);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let tau = rank_threshold(smax, r, c, floor);
    let mut x = DVector::zeros(c);
    let mut rank = 0;
    for (k, &s) in d.s.iter().enumerate() {
        if smax == 0.0 || s <= tau {
            continue;
        }
        rank += 1;
        let coef = d.u.column(k).dot(b) / s;
        x += d.v.column(k) * coef;
    }
    let residual = m * &x - b;
    Lstsq { x, residual, rank, nullity: c - rank }
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    let d = decompose(m);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let tau = rank_threshold(smax, r, c, floor);
    let rank = if smax == 0.0 { 0 } else { d.s.iter().filter(|s| **s > tau).count() };
    d.v.columns(rank, c - rank).into_owned()
}

/// Orthonormal basis (as rows) of the row space of `m`.
pub fn row_space(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(0, c);
    }
    let d = decompose(m);
    let smax = d.s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return DMatrix::zeros(0, c);
    }
    let tau = rank_threshold(smax, r, c, floor);
    let rank = d.s.iter().filter(|s| **s > tau).count();
    d.v.columns(0, rank).transpose()
}
