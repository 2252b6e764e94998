use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::form::{Form, Key};
use crate::error::{Error, Result};
use crate::expr::{CoordId, Expr, Point};
use crate::linalg;

/// Matrix of `v ↦ i_v Ω` in the coordinate basis of `coords`; rows are the
/// degree-(k−1) monomials that occur.
pub fn contraction_matrix(omega: &Form<f64>, coords: &[CoordId]) -> DMatrix<f64> {
    let mut rows: BTreeMap<Key, usize> = BTreeMap::new();
    let cols: Vec<Form<f64>> = coords.iter().map(|c| omega.contract_coord(*c)).collect();
    for f in &cols {
        for (k, _) in f.terms() {
            let next = rows.len();
            rows.entry(k.clone()).or_insert(next);
        }
    }
    let mut m = DMatrix::zeros(rows.len(), coords.len());
    for (j, f) in cols.iter().enumerate() {
        for (k, v) in f.terms() {
            m[(rows[k], j)] = *v;
        }
    }
    m
}

/// Rank of the contraction map of an evaluated form.
pub fn contraction_rank(omega: &Form<f64>, coords: &[CoordId], floor: f64) -> usize {
    linalg::numerical_rank(&contraction_matrix(omega, coords), floor)
}

fn check_closed_at(omega: &Form<Expr>, pts: &[Point]) -> Result<()> {
    let d = omega.exterior_d()?;
    for pt in pts {
        let dv = d.eval(pt)?;
        let scale = 1.0 + omega.eval(pt)?.max_abs();
        if dv.max_abs() > 1e-9 * scale {
            return Err(Error::NotClosed);
        }
    }
    Ok(())
}

/// True iff `v ↦ i_vΩ` is injective at every point, i.e. the contraction
/// matrix has full column rank over the points' coordinate space.
pub fn is_multisymplectic(omega: &Form<Expr>, pts: &[Point], floor: f64) -> Result<bool> {
    if omega.degree() < 2 {
        return Err(Error::DimensionMismatch(format!("degree {} < 2", omega.degree())));
    }
    check_closed_at(omega, pts)?;
    for pt in pts {
        let num = omega.eval(pt)?;
        let coords = pt.space.coords();
        if contraction_rank(&num, coords, floor) != coords.len() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff `η ∧ Ωⁿ` has a nonzero top coefficient at every point.
pub fn is_cosymplectic(omega: &Form<Expr>, eta: &Form<Expr>, pts: &[Point], tol: f64) -> Result<bool> {
    if omega.degree() != 2 || eta.degree() != 1 {
        return Err(Error::DimensionMismatch("expected a 2-form and a 1-form".into()));
    }
    check_closed_at(omega, pts)?;
    check_closed_at(eta, pts)?;
    for pt in pts {
        let dim = pt.space.dim();
        if dim % 2 == 0 {
            return Err(Error::DimensionMismatch(format!("chart dimension {dim} is even")));
        }
        let n = (dim - 1) / 2;
        let w = omega.eval(pt)?;
        let mut top = eta.eval(pt)?;
        for _ in 0..n {
            top = top.wedge(&w);
        }
        if top.coeff(pt.space.coords()).abs() <= tol {
            return Ok(false);
        }
    }
    Ok(true)
}
