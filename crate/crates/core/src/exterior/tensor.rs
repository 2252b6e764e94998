use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::form::{Coefficient, Form};
use crate::error::{Error, ExprError, Result};
use crate::expr::{CoordId, CoordSpace, Expr, Lookup};

/// Components of a tangent vector field in coordinate directions.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<C> {
    pub components: BTreeMap<CoordId, C>,
}

impl<C: Coefficient> VectorField<C> {
    pub fn zero() -> Self {
        VectorField { components: BTreeMap::new() }
    }

    pub fn coord(c: CoordId) -> Self {
        let mut v = VectorField::zero();
        v.set(c, C::from_f64(1.0));
        v
    }

    pub fn set(&mut self, c: CoordId, value: C) {
        if value.is_zero() {
            self.components.remove(&c);
        } else {
            self.components.insert(c, value);
        }
    }

    pub fn get(&self, c: CoordId) -> C {
        self.components.get(&c).cloned().unwrap_or_else(C::zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (c, v) in &other.components {
            let s = out.get(*c).add(v);
            out.set(*c, s);
        }
        out
    }

    pub fn scale(&self, s: &C) -> Self {
        let mut out = VectorField::zero();
        for (c, v) in &self.components {
            out.set(*c, v.mul(s));
        }
        out
    }
}

impl VectorField<Expr> {
    pub fn eval<L: Lookup + ?Sized>(&self, at: &L) -> Result<VectorField<f64>, ExprError> {
        let mut out = VectorField::zero();
        for (c, v) in &self.components {
            out.set(*c, v.eval(at)?);
        }
        Ok(out)
    }

    /// Directional derivative `X(f)`.
    pub fn apply_to(&self, f: &Expr) -> Result<Expr, ExprError> {
        let mut terms = Vec::new();
        for (c, v) in &self.components {
            if f.depends_on(*c) {
                terms.push(v * &f.diff(*c)?);
            }
        }
        Ok(Expr::sum(terms))
    }
}

/// `i_X a`.
pub fn contract_vector<C: Coefficient>(a: &Form<C>, x: &VectorField<C>) -> Form<C> {
    let mut out = Form::zero(a.degree().saturating_sub(1));
    if a.degree() == 0 {
        return out;
    }
    let present = a.differentials();
    for (c, v) in &x.components {
        if present.contains(c) {
            out = out.add(&a.contract_coord(*c).scale(v));
        }
    }
    out
}

/// A (1,1) tensor `h = h^a_b dx^b ⊗ ∂_a` on a coordinate space.
#[derive(Debug, Clone)]
pub struct Projector<C> {
    pub space: Arc<CoordSpace>,
    /// `(a, b) ↦ h^a_b`, the `a`-component of `h(∂_b)`.
    pub entries: BTreeMap<(CoordId, CoordId), C>,
}

impl<C: Coefficient> Projector<C> {
    pub fn zero(space: Arc<CoordSpace>) -> Self {
        Projector { space, entries: BTreeMap::new() }
    }

    pub fn identity(space: Arc<CoordSpace>) -> Self {
        let mut p = Projector::zero(space.clone());
        for c in space.coords() {
            p.entries.insert((*c, *c), C::from_f64(1.0));
        }
        p
    }

    /// `h = Σ_μ dx^μ ⊗ lift_μ`.
    pub fn from_lifts(space: Arc<CoordSpace>, lifts: &[(CoordId, VectorField<C>)]) -> Self {
        let mut p = Projector::zero(space);
        for (mu, lift) in lifts {
            for (a, v) in &lift.components {
                if !v.is_zero() {
                    p.entries.insert((*a, *mu), v.clone());
                }
            }
        }
        p
    }

    pub fn get(&self, a: CoordId, b: CoordId) -> C {
        self.entries.get(&(a, b)).cloned().unwrap_or_else(C::zero)
    }

    pub fn apply(&self, v: &VectorField<C>) -> VectorField<C> {
        let mut out: VectorField<C> = VectorField::zero();
        for ((a, b), h) in &self.entries {
            if let Some(vb) = v.components.get(b) {
                let s = out.get(*a).add(&h.mul(vb));
                out.set(*a, s);
            }
        }
        out
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Projector<C>) -> Projector<C> {
        let mut out: BTreeMap<(CoordId, CoordId), C> = BTreeMap::new();
        for ((a, b), h) in &self.entries {
            for ((b2, c), g) in other.entries.range((*b, CoordId::base(0))..) {
                if b2 != b {
                    break;
                }
                let prod = h.mul(g);
                let e = out.entry((*a, *c)).or_insert_with(C::zero);
                *e = e.add(&prod);
            }
        }
        out.retain(|_, v| !v.is_zero());
        Projector { space: self.space.clone(), entries: out }
    }

    /// Sum-over-slots contraction `(i_h a)(v₁…v_k) = Σ_j a(…, h v_j, …)`,
    /// computed as `Σ_a (h^* dx^a) ∧ i_{∂a} a`.
    pub fn contract(&self, a: &Form<C>) -> Result<Form<C>> {
        let present = a.differentials();
        if let Some(c) = present.iter().find(|c| !self.space.contains(**c)) {
            return Err(Error::ChartMismatch(format!("form uses {c:?}, which the projector's space lacks")));
        }
        let mut out = Form::zero(a.degree());
        if a.degree() == 0 {
            return Ok(out);
        }
        let mut contracted: HashMap<CoordId, Form<C>> = HashMap::new();
        for ((row, col), h) in &self.entries {
            if !present.contains(row) {
                continue;
            }
            let ia = contracted.entry(*row).or_insert_with(|| a.contract_coord(*row));
            out = out.add(&Form::d_coord(*col).wedge(ia).scale(h));
        }
        Ok(out)
    }
}

impl Projector<Expr> {
    pub fn eval<L: Lookup + ?Sized>(&self, at: &L) -> Result<Projector<f64>, ExprError> {
        let mut entries = BTreeMap::new();
        for (k, v) in &self.entries {
            let x = v.eval(at)?;
            if x != 0.0 {
                entries.insert(*k, x);
            }
        }
        Ok(Projector { space: self.space.clone(), entries })
    }
}

/// `i_h a` for a projector `h`.
pub fn contract_projector<C: Coefficient>(a: &Form<C>, h: &Projector<C>) -> Result<Form<C>> {
    h.contract(a)
}

/// `η = dx⁰ ∧ … ∧ dx^{n−1}`.
pub fn volume<C: Coefficient>(n: usize) -> Form<C> {
    let base: Vec<CoordId> = (0..n).map(CoordId::base).collect();
    Form::monomial(C::from_f64(1.0), &base)
}

/// `d^{n−1}x^μ = i_{∂/∂x^μ} η`.
pub fn volume_minus<C: Coefficient>(n: usize, mu: usize) -> Form<C> {
    volume::<C>(n).contract_coord(CoordId::base(mu))
}

/// The vertical tensor `S_η = (dy^i − z^i_μ dx^μ) ∧ d^{n−1}x^ν ⊗ ∂/∂z^i_ν`
/// of a jet chart with `n` base and `m` fiber coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerticalTensor {
    pub n: usize,
    pub m: usize,
}

impl VerticalTensor {
    pub fn new(n: usize, m: usize) -> Self {
        VerticalTensor { n, m }
    }

    /// Contact form `θ^i = dy^i − z^i_μ dx^μ`.
    pub fn contact(&self, i: usize) -> Form<Expr> {
        let mut th = Form::d_coord(CoordId::fiber(i));
        for mu in 0..self.n {
            th.add_term(&[CoordId::base(mu)], Expr::coord(CoordId::jet(i, mu)).neg());
        }
        th
    }

    /// `S_η^*(dL) = Σ (∂L/∂z^i_ν) θ^i ∧ d^{n−1}x^ν`, reading the partials off
    /// the `dz^i_ν` coefficients of `dL`.
    pub fn adjoint(&self, dl: &Form<Expr>) -> Result<Form<Expr>> {
        if dl.degree() != 1 {
            return Err(Error::WrongChart(format!("expected a 1-form, got degree {}", dl.degree())));
        }
        if let Some(c) = dl.differentials().iter().find(|c| {
            let bad_index = match c.space {
                crate::expr::Space::Base => c.mu as usize >= self.n,
                crate::expr::Space::Fiber => c.i as usize >= self.m,
                crate::expr::Space::Jet => c.i as usize >= self.m || c.mu as usize >= self.n,
                _ => true,
            };
            bad_index
        }) {
            return Err(Error::WrongChart(format!("{c:?} is not a jet-chart coordinate")));
        }
        let mut out = Form::zero(self.n);
        for i in 0..self.m {
            let th = self.contact(i);
            for nu in 0..self.n {
                let p = dl.coeff(&[CoordId::jet(i, nu)]);
                if p.is_zero() {
                    continue;
                }
                out = out.add(&th.wedge(&volume_minus(self.n, nu)).scale(&p));
            }
        }
        Ok(out)
    }

    /// `S_η(v₁, …, v_n)` at a point, returned as `∂/∂z^i_ν` components.
    pub fn apply<L: Lookup + ?Sized>(
        &self,
        at: &L,
        vectors: &[VectorField<f64>],
    ) -> Result<BTreeMap<CoordId, f64>> {
        assert_eq!(vectors.len(), self.n, "S_η takes n arguments");
        let closures: Vec<Box<dyn Fn(CoordId) -> f64 + '_>> =
            vectors.iter().map(|v| Box::new(move |c: CoordId| v.get(c)) as Box<dyn Fn(CoordId) -> f64>).collect();
        let refs: Vec<&dyn Fn(CoordId) -> f64> = closures.iter().map(|b| b.as_ref()).collect();
        let mut out = BTreeMap::new();
        for i in 0..self.m {
            let th = self.contact(i).eval(at)?;
            for nu in 0..self.n {
                let w = th.wedge(&volume_minus::<f64>(self.n, nu));
                out.insert(CoordId::jet(i, nu), w.evaluate_on(&refs));
            }
        }
        Ok(out)
    }
}
