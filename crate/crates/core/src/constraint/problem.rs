use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bundle::{
    h0, hamiltonian_forms, omega_h0, omega_wbar1, poincare_cartan, BundleChart, Formalism, LagrangianTheory, Layer,
};
use crate::connection::{ConnectionKind, ConstraintSet, Provenance};
use crate::error::{Error, Result};
use crate::exterior::Form;
use crate::expr::{CoordId, CoordSpace, Expr, Point};

/// Step of the finite-difference gradient for functions without symbolic
/// partials.
const FD_STEP: f64 = 1e-6;

/// A constraint set with its gradients prepared for one coordinate space.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub set: ConstraintSet,
    pub tol: f64,
    space: Arc<CoordSpace>,
    /// Sparse symbolic gradient, or `None` when it must be finite-differenced.
    grads: Vec<Option<Vec<(usize, Expr)>>>,
}

impl Prepared {
    pub fn new(set: ConstraintSet, space: Arc<CoordSpace>) -> Result<Self> {
        let mut grads = Vec::with_capacity(set.len());
        for c in &set.entries {
            if let Some(bad) = c.expr.free_coords().into_iter().find(|x| !space.contains(*x)) {
                return Err(Error::LayerMismatch(format!("constraint uses {bad:?}, which is not on this layer")));
            }
            let mut g = Vec::new();
            let mut symbolic = true;
            for (k, x) in space.coords().iter().enumerate() {
                if !c.expr.depends_on(*x) {
                    continue;
                }
                match c.expr.diff(*x) {
                    Ok(d) => g.push((k, d)),
                    Err(_) => {
                        symbolic = false;
                        break;
                    }
                }
            }
            grads.push(symbolic.then_some(g));
        }
        let tol = set.tol;
        Ok(Prepared { set, tol, space, grads })
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn values_at(&self, pt: &Point) -> Result<Vec<f64>> {
        Ok(self.set.entries.iter().map(|c| c.expr.eval(pt)).collect::<std::result::Result<_, _>>()?)
    }

    /// Dense gradients, one row per function, columns in space order.
    pub fn gradients_at(&self, pt: &Point) -> Result<Vec<Vec<f64>>> {
        let dim = self.space.dim();
        let mut out = Vec::with_capacity(self.len());
        for (c, g) in self.set.entries.iter().zip(&self.grads) {
            let mut row = vec![0.0; dim];
            match g {
                Some(g) => {
                    for (k, d) in g {
                        row[*k] = d.eval(pt)?;
                    }
                }
                None => {
                    for (k, x) in self.space.coords().iter().enumerate() {
                        let v = pt.get(*x).unwrap_or(0.0);
                        let h = FD_STEP * v.abs().max(1.0);
                        let hi = c.expr.eval(&pt.with(*x, v + h))?;
                        let lo = c.expr.eval(&pt.with(*x, v - h))?;
                        row[k] = (hi - lo) / (2.0 * h);
                    }
                }
            }
            out.push(row);
        }
        Ok(out)
    }

    pub fn jacobian_at(&self, pt: &Point) -> Result<DMatrix<f64>> {
        let g = self.gradients_at(pt)?;
        Ok(DMatrix::from_fn(g.len(), self.space.dim(), |r, c| g[r][c]))
    }

    /// Largest gradient-relative violation, as in [`ConstraintSet::violation`].
    pub fn violation_at(&self, pt: &Point) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let vals = self.values_at(pt)?;
        let grads = self.gradients_at(pt)?;
        let mut worst: f64 = 0.0;
        for (v, g) in vals.iter().zip(&grads) {
            if !v.is_finite() {
                return Ok(f64::INFINITY);
            }
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(v.abs() / norm.max(1e-12));
        }
        Ok(worst)
    }
}

/// The ambient geometry one constraint algorithm runs on.
#[derive(Debug)]
pub struct Problem {
    pub formalism: Formalism,
    pub theory: Arc<LagrangianTheory>,
    pub chart: Arc<BundleChart>,
    pub layer: Layer,
    pub space: Arc<CoordSpace>,
    pub omega: Form<Expr>,
    /// Defining functions of the manifold the connection must be tangent to
    /// by construction (handled through a graph frame, not tangency rows).
    pub frame: Prepared,
    /// Functions of the first set beyond the frame.
    pub primary: ConstraintSet,
    /// Printed before the chain constraints in reports.
    pub display_prefix: Vec<Expr>,
    pub kind: ConnectionKind,
    pub n: usize,
}

/// `{p^μ_i − ∂L/∂z^i_μ} ∪ {H₀}` with `H₀` reduced by the first family, so
/// the energy function only involves `p` and the `Z` coordinates.
pub fn primary_constraints_unified(th: &LagrangianTheory) -> Result<ConstraintSet> {
    let chart = &th.chart;
    let mut set = ConstraintSet::new(Layer::W0);
    let mut sub = HashMap::new();
    for z in chart.jets() {
        let dl = th.lagrangian.diff(z)?;
        let p = CoordId::momentum(z.i as usize, z.mu as usize);
        set.extend([Expr::coord(p) - dl.clone()], Provenance::PrimarySymbolic);
        sub.insert(p, dl);
    }
    set.extend([h0(th).substitute(&sub)], Provenance::PrimarySymbolic);
    Ok(set)
}

impl Problem {
    pub fn new(th: Arc<LagrangianTheory>, formalism: Formalism) -> Result<Self> {
        let chart = th.chart.clone();
        let (layer, omega, frame, primary, prefix, kind) = match formalism {
            Formalism::Lagrangian => {
                let (_, omega) = poincare_cartan(&th)?;
                (Layer::Z, omega, ConstraintSet::new(Layer::Z), ConstraintSet::new(Layer::Z), vec![], ConnectionKind::LagrangianZ)
            }
            Formalism::Hamiltonian => {
                let hd = th.hamiltonian()?;
                let (_, omega) = hamiltonian_forms(hd)?;
                let frame = ConstraintSet::new(Layer::ZStar).with(hd.constraints.clone(), Provenance::PrimarySymbolic);
                (Layer::ZStar, omega, frame, ConstraintSet::new(Layer::ZStar), vec![], ConnectionKind::HamiltonianZstar)
            }
            Formalism::Unified => {
                let primary = primary_constraints_unified(&th)?;
                (Layer::W0, omega_h0(&th)?, ConstraintSet::new(Layer::W0), primary, vec![], ConnectionKind::UnifiedW0)
            }
            Formalism::UnifiedRestricted => {
                // W̄₁ is the graph of leg_L, so it is charted by Z.
                let prefix = primary_constraints_unified(&th)?.exprs();
                (Layer::Z, omega_wbar1(&th)?, ConstraintSet::new(Layer::Z), ConstraintSet::new(Layer::Z), prefix, ConnectionKind::LagrangianZ)
            }
        };
        let space = chart.layer(layer).clone();
        Ok(Problem {
            formalism,
            n: th.n(),
            frame: Prepared::new(frame, space.clone())?,
            primary,
            display_prefix: prefix,
            layer,
            space,
            omega,
            kind,
            chart,
            theory: th,
        })
    }

    /// `pt` expressed on this problem's coordinate space.
    pub fn localize(&self, pt: &Point) -> Result<Point> {
        if Arc::ptr_eq(&pt.space, &self.space) || *pt.space == *self.space {
            return Ok(pt.clone());
        }
        if let Some(c) = self.space.coords().iter().find(|c| !pt.space.contains(**c)) {
            return Err(Error::LayerMismatch(format!("point has no `{}` coordinate", self.chart.name(*c))));
        }
        Ok(pt.project_to(&self.space))
    }

    /// Frame functions followed by `chain`.
    pub fn full_set(&self, chain: &ConstraintSet) -> ConstraintSet {
        let mut out = self.frame.set.clone();
        out.entries.extend(chain.entries.iter().cloned());
        out
    }

    pub fn prepare(&self, set: &ConstraintSet) -> Result<Prepared> {
        Prepared::new(set.clone(), self.space.clone())
    }

    /// Printed constraint list for a chain set.
    pub fn describe(&self, chain: &ConstraintSet) -> Vec<String> {
        let namer = |c: CoordId| self.chart.name(c);
        self.display_prefix
            .iter()
            .chain(self.frame.set.entries.iter().map(|c| &c.expr))
            .chain(chain.entries.iter().map(|c| &c.expr))
            .map(|e| e.to_dsl(&namer))
            .collect()
    }
}
