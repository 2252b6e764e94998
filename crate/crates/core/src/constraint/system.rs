//! Pointwise linear systems for the horizontal lifts.
//!
//! With `h(∂_μ) = T_μ + Σ_f u_{μf} T_f` over free non-base frame directions,
//! `i_hω − (n−1)ω = 0` is linear in `u`: the column of `u_{μf}` is
//! `dx^μ ∧ i_{∂f}ω` and the right-hand side `(n−1)ω − Σ_μ dx^μ ∧ i_{∂μ}ω`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::problem::{Prepared, Problem};
use crate::bundle::Formalism;
use crate::connection::{ConnectionCoeffs, ConnectionKind};
use crate::error::{Error, Result};
use crate::exterior::{pullback, Coefficient, Form, Key};
use crate::expr::{CoordId, Point};
use crate::linalg;

/// Default relative solvability tolerance.
pub const SOLVE_TOL: f64 = 1e-8;
// Relative singular-value floor; sampled points sit on their sets to about
// 1e-10, so anything smaller is noise.
const RANK_FLOOR: f64 = 1e-9;

/// Local graph chart of a constraint submanifold: pivot differentials are
/// linear combinations of the free ones, `dp = Σ_f w[p][f] df`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub free: Vec<CoordId>,
    pub pivots: Vec<CoordId>,
    /// `pivots.len() × free.len()`.
    pub w: DMatrix<f64>,
}

impl Frame {
    pub fn identity(coords: &[CoordId]) -> Self {
        Frame { free: coords.to_vec(), pivots: Vec::new(), w: DMatrix::zeros(0, coords.len()) }
    }

    /// Chart of `{φ = 0}` at `pt` from the gradient rows `jac` (one per
    /// function, columns in `coords` order). Pivots are chosen among
    /// non-base coordinates by complete pivoting.
    pub fn from_jacobian(coords: &[CoordId], jac: &DMatrix<f64>) -> Result<Self> {
        let k = jac.nrows();
        if k == 0 {
            return Ok(Frame::identity(coords));
        }
        let mut a = jac.clone();
        let mut pivot_cols: Vec<usize> = Vec::new();
        let mut used_rows = vec![false; k];
        for _ in 0..k {
            let mut best = (0.0, 0, 0);
            for r in (0..k).filter(|r| !used_rows[*r]) {
                for c in (0..coords.len()).filter(|c| !coords[*c].is_base() && !pivot_cols.contains(c)) {
                    if a[(r, c)].abs() > best.0 {
                        best = (a[(r, c)].abs(), r, c);
                    }
                }
            }
            if best.0 <= 1e-12 {
                return Err(Error::DegenerateStructure("constraint gradients are not independent".into()));
            }
            let (_, r, c) = best;
            used_rows[r] = true;
            pivot_cols.push(c);
            let pr = a.row(r).clone_owned() / a[(r, c)];
            for rr in 0..k {
                if rr != r {
                    let f = a[(rr, c)];
                    if f != 0.0 {
                        let upd = a.row(rr) - pr.clone() * f;
                        a.set_row(rr, &upd);
                    }
                }
            }
        }
        let free_cols: Vec<usize> = (0..coords.len()).filter(|c| !pivot_cols.contains(c)).collect();
        let jp = DMatrix::from_fn(k, k, |r, j| jac[(r, pivot_cols[j])]);
        let jf = DMatrix::from_fn(k, free_cols.len(), |r, j| jac[(r, free_cols[j])]);
        let inv = jp.try_inverse().ok_or_else(|| Error::DegenerateStructure("singular pivot block".into()))?;
        Ok(Frame {
            free: free_cols.iter().map(|c| coords[*c]).collect(),
            pivots: pivot_cols.iter().map(|c| coords[*c]).collect(),
            w: -(inv * jf),
        })
    }

    /// `T_f φ` from the ambient gradient `grad` (indexed like `coords`).
    pub fn tangent_derivative(&self, coords: &[CoordId], grad: &[f64], f: usize) -> f64 {
        let at = |c: CoordId| coords.iter().position(|x| *x == c).map(|k| grad[k]).unwrap_or(0.0);
        let mut v = at(self.free[f]);
        for (p, pc) in self.pivots.iter().enumerate() {
            v += self.w[(p, f)] * at(*pc);
        }
        v
    }

    fn pull(&self, form: &Form<f64>) -> Form<f64> {
        if self.pivots.is_empty() {
            return form.clone();
        }
        let mut images = BTreeMap::new();
        for (p, pc) in self.pivots.iter().enumerate() {
            let mut img = Form::zero(1);
            for (f, fc) in self.free.iter().enumerate() {
                img.add_term(&[*fc], self.w[(p, f)]);
            }
            images.insert(*pc, img);
        }
        pullback(form, &images, |v| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RowKey {
    /// Coefficient of a basis `(n+1)`-form.
    Form(Vec<CoordId>),
    /// `h(∂/∂x^μ)(φ_k) = 0`.
    Tangency { constraint: usize, mu: usize },
}

#[derive(Debug, Clone)]
pub struct ProjectorSystem {
    pub formalism: Formalism,
    pub point: Point,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Unknown `(μ, c)`: the `∂/∂c` component of `h(∂/∂x^μ)` (in frame terms).
    pub columns: Vec<(usize, CoordId)>,
    pub column_labels: Vec<String>,
    pub rows: Vec<RowKey>,
    pub frame: Frame,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub solvable: bool,
    pub solution: Vec<f64>,
    /// `‖Mx − b‖ / max(1, ‖b‖)` at the minimum-norm least-squares `x`.
    pub residual: f64,
    pub nullity: usize,
}

/// Columns and right-hand side of the contraction identity for an arbitrary
/// coefficient ring; `unknown` are the free non-base directions.
pub fn contraction_rows<C: Coefficient>(
    omega: &Form<C>,
    n: usize,
    unknown: &[CoordId],
) -> (Vec<((usize, CoordId), Form<C>)>, Form<C>) {
    let mut cols = Vec::new();
    for mu in 0..n {
        let dx = Form::d_coord(CoordId::base(mu));
        for f in unknown {
            cols.push(((mu, *f), dx.wedge(&omega.contract_coord(*f))));
        }
    }
    let mut rhs = omega.scale(&C::from_f64(n as f64 - 1.0));
    for mu in 0..n {
        let dx = Form::d_coord(CoordId::base(mu));
        rhs = rhs.sub(&dx.wedge(&omega.contract_coord(CoordId::base(mu))));
    }
    (cols, rhs)
}

impl Problem {
    /// Assemble the system at `pt` with tangency rows for `known`.
    pub fn assemble(&self, pt: &Point, known: &Prepared) -> Result<ProjectorSystem> {
        self.assemble_with(pt, known, true)
    }

    /// As [`Problem::assemble`]; `check = false` skips the membership tests
    /// so the system can be formed off the constraint set.
    pub fn assemble_with(&self, pt: &Point, known: &Prepared, check: bool) -> Result<ProjectorSystem> {
        let pt = self.localize(pt)?;
        let coords = self.space.coords().to_vec();
        let frame = if self.frame.is_empty() {
            Frame::identity(&coords)
        } else {
            let v = if check { self.frame.violation_at(&pt)? } else { 0.0 };
            if v > self.frame.tol {
                return Err(Error::PointOffConstraint(v));
            }
            Frame::from_jacobian(&coords, &self.frame.jacobian_at(&pt)?)?
        };
        let v = if check { known.violation_at(&pt)? } else { 0.0 };
        if v > known.tol {
            return Err(Error::PointOffConstraint(v));
        }
        let omega = frame.pull(&self.omega.eval(&pt)?);
        let unknown: Vec<(usize, CoordId)> =
            frame.free.iter().enumerate().filter(|(_, c)| !c.is_base()).map(|(k, c)| (k, *c)).collect();
        let unknown_coords: Vec<CoordId> = unknown.iter().map(|(_, c)| *c).collect();
        let (cols, rhs) = contraction_rows(&omega, self.n, &unknown_coords);

        let mut row_index: BTreeMap<Key, usize> = BTreeMap::new();
        for (k, _) in rhs.terms() {
            let next = row_index.len();
            row_index.entry(k.clone()).or_insert(next);
        }
        for (_, f) in &cols {
            for (k, _) in f.terms() {
                let next = row_index.len();
                row_index.entry(k.clone()).or_insert(next);
            }
        }
        let form_rows = row_index.len();
        let tangency = known.len() * self.n;
        let mut m = DMatrix::zeros(form_rows + tangency, cols.len());
        let mut b = DVector::zeros(form_rows + tangency);
        for (j, (_, f)) in cols.iter().enumerate() {
            for (k, v) in f.terms() {
                m[(row_index[k], j)] = *v;
            }
        }
        for (k, v) in rhs.terms() {
            b[row_index[k]] = *v;
        }
        let mut rows: Vec<RowKey> = vec![RowKey::Form(Vec::new()); form_rows];
        for (k, r) in &row_index {
            rows[*r] = RowKey::Form(k.to_vec());
        }
        let grads = known.gradients_at(&pt)?;
        let base_index: Vec<usize> = (0..self.n)
            .map(|mu| frame.free.iter().position(|c| *c == CoordId::base(mu)).expect("base coordinates stay free"))
            .collect();
        for (ci, g) in grads.iter().enumerate() {
            for mu in 0..self.n {
                let r = form_rows + ci * self.n + mu;
                rows.push(RowKey::Tangency { constraint: ci, mu });
                b[r] = -frame.tangent_derivative(&coords, g, base_index[mu]);
                for (j, ((nu, _), _)) in cols.iter().enumerate() {
                    if *nu == mu {
                        let f = unknown[j % unknown.len()].0;
                        m[(r, j)] = frame.tangent_derivative(&coords, g, f);
                    }
                }
            }
        }
        let kind = self.kind;
        let column_labels = cols
            .iter()
            .map(|((mu, c), _)| format!("{}[{},{}]", kind.symbol(*c), self.chart.name(*c), self.chart.base_labels()[*mu]))
            .collect();
        Ok(ProjectorSystem {
            formalism: self.formalism,
            point: pt,
            matrix: m,
            rhs: b,
            columns: cols.iter().map(|(k, _)| *k).collect(),
            column_labels,
            rows,
            frame,
            n: self.n,
        })
    }
}

/// Minimum-norm least squares; solvable iff the relative residual is at
/// most `tol`.
pub fn solve_pointwise(sys: &ProjectorSystem, tol: f64) -> SolveResult {
    if sys.matrix.nrows() == 0 {
        return SolveResult { solvable: true, solution: vec![0.0; sys.matrix.ncols()], residual: 0.0, nullity: sys.matrix.ncols() };
    }
    let ls = linalg::lstsq_min_norm(&sys.matrix, &sys.rhs, RANK_FLOOR);
    let residual = ls.residual.norm() / sys.rhs.norm().max(1.0);
    SolveResult { solvable: residual <= tol, solution: ls.x.iter().copied().collect(), residual, nullity: ls.nullity }
}

impl ProjectorSystem {
    /// The residual component `(I − MM⁺)b`, aligned with `rows`.
    pub fn inconsistency(&self) -> DVector<f64> {
        if self.matrix.nrows() == 0 {
            return DVector::zeros(0);
        }
        let ls = linalg::lstsq_min_norm(&self.matrix, &self.rhs, RANK_FLOOR);
        &self.rhs - &self.matrix * ls.x
    }

    /// Horizontal lifts on the ambient layer from a solution vector; pivot
    /// components follow from the frame so the lifts are tangent to it.
    pub fn coefficients(&self, kind: ConnectionKind, chart: std::sync::Arc<crate::bundle::BundleChart>, x: &[f64]) -> Result<ConnectionCoeffs<f64>> {
        let mut out = ConnectionCoeffs::zero(kind, chart);
        let mut comps: BTreeMap<(usize, CoordId), f64> = BTreeMap::new();
        for mu in 0..self.n {
            let bi = self.frame.free.iter().position(|c| *c == CoordId::base(mu)).expect("base is free");
            for (p, pc) in self.frame.pivots.iter().enumerate() {
                *comps.entry((mu, *pc)).or_default() += self.frame.w[(p, bi)];
            }
        }
        for (j, (mu, c)) in self.columns.iter().enumerate() {
            *comps.entry((*mu, *c)).or_default() += x[j];
            let f = self.frame.free.iter().position(|x| x == c).expect("column is a free coordinate");
            for (p, pc) in self.frame.pivots.iter().enumerate() {
                *comps.entry((*mu, *pc)).or_default() += self.frame.w[(p, f)] * x[j];
            }
        }
        for ((mu, c), v) in comps {
            if v != 0.0 {
                out.set(mu, c, v)?;
            }
        }
        Ok(out)
    }
}
