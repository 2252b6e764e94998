//! Canonical forms, Legendre maps and the unified-space objects, in
//! coordinates.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use super::chart::BundleChart;
use super::theory::{HamiltonianData, LagrangianTheory};
use crate::error::Result;
use crate::exterior::{pullback, volume, volume_minus, Form, VerticalTensor};
use crate::expr::{CoordId, Expr, Lookup};
use crate::linalg;

/// `∂L/∂z^i_μ` in jet order.
pub fn dl_dz(th: &LagrangianTheory) -> Result<Vec<Expr>> {
    Ok(th.lagrangian.gradient(&th.chart.jets())?)
}

/// `∂²L/∂z^i_μ ∂z^j_ν`, rows and columns in jet order.
pub fn hessian(th: &LagrangianTheory) -> Result<Vec<Vec<Expr>>> {
    let jets = th.chart.jets();
    let first = dl_dz(th)?;
    let mut out = Vec::with_capacity(jets.len());
    for f in &first {
        out.push(f.gradient(&jets)?);
    }
    Ok(out)
}

pub fn hessian_at<L: Lookup + ?Sized>(th: &LagrangianTheory, pt: &L) -> Result<DMatrix<f64>> {
    let h = hessian(th)?;
    eval_matrix(&h, pt)
}

pub(crate) fn eval_matrix<L: Lookup + ?Sized>(m: &[Vec<Expr>], pt: &L) -> Result<DMatrix<f64>> {
    let r = m.len();
    let c = m.first().map(|row| row.len()).unwrap_or(0);
    let mut out = DMatrix::zeros(r, c);
    for (i, row) in m.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            out[(i, j)] = e.eval(pt)?;
        }
    }
    Ok(out)
}

/// Hessian has full rank `nm` at the point.
pub fn is_regular_at<L: Lookup + ?Sized>(th: &LagrangianTheory, pt: &L, floor: f64) -> Result<bool> {
    let h = hessian_at(th, pt)?;
    Ok(linalg::numerical_rank(&h, floor) == th.n() * th.m())
}

/// `Θ_L = L η + S_η^*(dL)` and `Ω_L = −dΘ_L`.
pub fn poincare_cartan(th: &LagrangianTheory) -> Result<(Form<Expr>, Form<Expr>)> {
    let n = th.n();
    let dl = Form::d_function(&th.lagrangian)?;
    let s = VerticalTensor::new(n, th.m()).adjoint(&dl)?;
    let theta = volume::<Expr>(n).scale(&th.lagrangian).add(&s);
    let omega = theta.exterior_d()?.neg();
    Ok((theta, omega))
}

/// `Θ₂ = p dⁿx + p^μ_i dy^i ∧ d^{n−1}x^μ` and `Ω₂ = −dΘ₂`.
pub fn canonical_forms(chart: &BundleChart) -> Result<(Form<Expr>, Form<Expr>)> {
    let n = chart.n;
    let mut theta = volume::<Expr>(n).scale(&Expr::coord(CoordId::energy()));
    for i in 0..chart.m {
        for mu in 0..n {
            let dy = Form::<Expr>::d_coord(CoordId::fiber(i));
            theta = theta.add(&dy.wedge(&volume_minus(n, mu)).scale(&Expr::coord(CoordId::momentum(i, mu))));
        }
    }
    let omega = theta.exterior_d()?.neg();
    Ok((theta, omega))
}

/// `leg_L`: `p = L − z ∂L/∂z`, `p^μ_i = ∂L/∂z^i_μ`.
pub fn leg_map(th: &LagrangianTheory) -> Result<HashMap<CoordId, Expr>> {
    let jets = th.chart.jets();
    let first = dl_dz(th)?;
    let mut map = HashMap::new();
    let mut energy = vec![th.lagrangian.clone()];
    for (k, z) in jets.iter().enumerate() {
        energy.push((Expr::coord(*z) * first[k].clone()).neg());
        map.insert(CoordId::momentum(z.i as usize, z.mu as usize), first[k].clone());
    }
    map.insert(CoordId::energy(), Expr::sum(energy));
    Ok(map)
}

/// `Leg_L`: `p^μ_i = ∂L/∂z^i_μ`.
pub fn legendre_map(th: &LagrangianTheory) -> Result<HashMap<CoordId, Expr>> {
    let mut m = leg_map(th)?;
    m.remove(&CoordId::energy());
    Ok(m)
}

/// Jacobian of `Leg_L : Z → Z*` in the layer coordinate orders.
pub fn legendre_jacobian_at<L: Lookup + ?Sized>(th: &LagrangianTheory, pt: &L) -> Result<DMatrix<f64>> {
    let z = th.chart.layer(super::Layer::Z).clone();
    let zs = th.chart.layer(super::Layer::ZStar).clone();
    let leg = legendre_map(th)?;
    let mut jac = DMatrix::zeros(zs.dim(), z.dim());
    for (r, target) in zs.coords().iter().enumerate() {
        match leg.get(target) {
            Some(e) => {
                for (c, src) in z.coords().iter().enumerate() {
                    if e.depends_on(*src) {
                        jac[(r, c)] = e.diff(*src)?.eval(pt)?;
                    }
                }
            }
            None => {
                let c = z.position(*target).expect("x and y are shared");
                jac[(r, c)] = 1.0;
            }
        }
    }
    Ok(jac)
}

pub fn legendre_rank_at<L: Lookup + ?Sized>(th: &LagrangianTheory, pt: &L, floor: f64) -> Result<usize> {
    Ok(linalg::numerical_rank(&legendre_jacobian_at(th, pt)?, floor))
}

/// `Θ_h = −H dⁿx + p^μ_i dy^i ∧ d^{n−1}x^μ` and `Ω_h = −dΘ_h`.
pub fn hamiltonian_forms(hd: &HamiltonianData) -> Result<(Form<Expr>, Form<Expr>)> {
    let (theta2, _) = canonical_forms(&hd.chart)?;
    let mut sub = HashMap::new();
    sub.insert(CoordId::energy(), hd.h.neg());
    let theta = pullback_substitution(&theta2, &sub)?;
    let omega = theta.exterior_d()?.neg();
    Ok((theta, omega))
}

/// `Φ = p + p^μ_i z^i_μ`.
pub fn pairing_phi(chart: &BundleChart) -> Expr {
    let mut terms = vec![Expr::coord(CoordId::energy())];
    for z in chart.jets() {
        terms.push(Expr::coord(CoordId::momentum(z.i as usize, z.mu as usize)) * Expr::coord(z));
    }
    Expr::sum(terms)
}

/// `H₀ = Φ − L`.
pub fn h0(th: &LagrangianTheory) -> Expr {
    pairing_phi(&th.chart) - th.lagrangian.clone()
}

/// `Ω_{H₀} = Ω₂ + dH₀ ∧ dⁿx` on `W₀`.
pub fn omega_h0(th: &LagrangianTheory) -> Result<Form<Expr>> {
    let (_, omega2) = canonical_forms(&th.chart)?;
    let dh = Form::d_function(&h0(th))?;
    Ok(omega2.add(&dh.wedge(&volume(th.n()))))
}

/// Parametrization of `W̄₁` by `Z`: momenta by `leg_L`.
pub fn wbar1_parametrization(th: &LagrangianTheory) -> Result<HashMap<CoordId, Expr>> {
    leg_map(th)
}

/// `Ω_{H₀}` pulled back to `W̄₁ ≅ Z`.
pub fn omega_wbar1(th: &LagrangianTheory) -> Result<Form<Expr>> {
    pullback_substitution(&omega_h0(th)?, &wbar1_parametrization(th)?)
}

/// Pull back along the map `c ↦ map[c]` (identity on other coordinates).
pub fn pullback_substitution(form: &Form<Expr>, map: &HashMap<CoordId, Expr>) -> Result<Form<Expr>> {
    let mut images: BTreeMap<CoordId, Form<Expr>> = BTreeMap::new();
    for c in form.differentials() {
        if let Some(e) = map.get(&c) {
            images.insert(c, Form::d_function(e)?);
        }
    }
    Ok(pullback(form, &images, |c| c.substitute(map)))
}
