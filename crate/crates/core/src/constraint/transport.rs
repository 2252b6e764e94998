//! Cross-formalism comparison of constraint chains: the Legendre map and
//! the projections of `W̄₁ ≅ Z` should carry each set onto its counterpart.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::chain::{classify, run_algorithm, AlgorithmTrace, ChainOptions};
use super::problem::{Prepared, Problem};
use super::system::{solve_pointwise, SOLVE_TOL};
use crate::bundle::{legendre_map, Formalism, LagrangianTheory, Layer};
use crate::connection::{ConnectionCoeffs, ConnectionKind};
use crate::error::Result;
use crate::expr::{CoordId, Expr, ExternalFn, Point};

#[derive(Debug, Clone, Serialize)]
pub struct TransportRow {
    pub r: usize,
    pub direction: String,
    pub samples: usize,
    /// Largest `|φ|` of the target set at the image points.
    pub max_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportReport {
    pub rows: Vec<TransportRow>,
    pub max_violation: f64,
    pub final_steps: BTreeMap<String, Option<usize>>,
    pub same_final_step: bool,
    #[serde(skip)]
    pub traces: BTreeMap<Formalism, AlgorithmTrace>,
}

/// `Leg_L` as a point map `Z → Z*`.
pub fn legendre_point(th: &LagrangianTheory, leg: &std::collections::HashMap<CoordId, Expr>, z: &Point) -> Result<Point> {
    let space = th.chart.layer(Layer::ZStar).clone();
    let mut out = Point::zeros(space.clone());
    for (k, c) in space.coords().iter().enumerate() {
        out.values[k] = match leg.get(c) {
            Some(e) => e.eval(z)?,
            None => z.get(*c).unwrap_or(0.0),
        };
    }
    Ok(out)
}

fn max_abs(problem: &Problem, set: &crate::connection::ConstraintSet, pts: &[Point]) -> Result<f64> {
    let prepared = problem.prepare(&problem.full_set(set))?;
    let mut worst: f64 = 0.0;
    for pt in pts {
        for v in prepared.values_at(pt)? {
            worst = worst.max(v.abs());
        }
    }
    Ok(worst)
}

/// Run the Lagrangian, Hamiltonian and restricted unified chains and check
/// `Leg₁(Z_r) ⊆ Z̃_r`, `p̃r₁(Ŵ_r) ⊆ Z̃_r` and `p̃r₂(Ŵ_r) ⊆ Z_r` at every
/// computed step.
pub fn transport_and_compare(th: &Arc<LagrangianTheory>, opts: &ChainOptions) -> Result<TransportReport> {
    let lag = Arc::new(Problem::new(th.clone(), Formalism::Lagrangian)?);
    let ham = Arc::new(Problem::new(th.clone(), Formalism::Hamiltonian)?);
    let res = Arc::new(Problem::new(th.clone(), Formalism::UnifiedRestricted)?);
    let tz = run_algorithm(&lag, opts)?;
    let tzs = run_algorithm(&ham, opts)?;
    let tw = run_algorithm(&res, opts)?;
    let leg = legendre_map(th)?;
    let steps = tz.steps.len().max(tzs.steps.len()).max(tw.steps.len());
    let mut rows = Vec::new();
    for r in 1..=steps {
        let seed_stream = 1000 + r as u64;
        let zr = opts.sampler.sample(&lag, &lag.prepare(&lag.full_set(tz.set(r)))?, seed_stream);
        let wr = opts.sampler.sample(&res, &res.prepare(&res.full_set(tw.set(r)))?, seed_stream + 1);
        let img = |pts: &[Point]| pts.iter().map(|z| legendre_point(th, &leg, z)).collect::<Result<Vec<_>>>();
        rows.push(TransportRow {
            r,
            direction: "Leg1(Z_r) -> Ztilde_r".into(),
            samples: zr.len(),
            max_violation: max_abs(&ham, tzs.set(r), &img(&zr)?)?,
        });
        rows.push(TransportRow {
            r,
            direction: "prtilde1(What_r) -> Ztilde_r".into(),
            samples: wr.len(),
            max_violation: max_abs(&ham, tzs.set(r), &img(&wr)?)?,
        });
        rows.push(TransportRow {
            r,
            direction: "prtilde2(What_r) -> Z_r".into(),
            samples: wr.len(),
            max_violation: max_abs(&lag, tz.set(r), &wr)?,
        });
    }
    let max_violation = rows.iter().map(|r| r.max_violation).fold(0.0, f64::max);
    let mut final_steps = BTreeMap::new();
    for t in [&tz, &tzs, &tw] {
        final_steps.insert(t.formalism.label().to_string(), t.final_step());
    }
    let same_final_step = tz.stabilized && tz.final_step() == tzs.final_step() && tz.final_step() == tw.final_step();
    let mut traces = BTreeMap::new();
    traces.insert(Formalism::Lagrangian, tz);
    traces.insert(Formalism::Hamiltonian, tzs);
    traces.insert(Formalism::UnifiedRestricted, tw);
    Ok(TransportReport { rows, max_violation, final_steps, same_final_step, traces })
}

#[derive(Debug, Clone, Serialize)]
pub struct InclusionRow {
    pub r: usize,
    pub checked: usize,
    pub violations: usize,
}

/// Points of `W̄_r` accepted by the unified classifier must, read in `Z`
/// coordinates, lie on `Ŵ_r` and be accepted by the restricted one. A chain
/// that stabilized early stands for all later steps.
pub fn unified_inclusion(th: &Arc<LagrangianTheory>, opts: &ChainOptions) -> Result<Vec<InclusionRow>> {
    let uni = Arc::new(Problem::new(th.clone(), Formalism::Unified)?);
    let res = Arc::new(Problem::new(th.clone(), Formalism::UnifiedRestricted)?);
    let tu = run_algorithm(&uni, opts)?;
    let tw = run_algorithm(&res, opts)?;
    let mut out = Vec::new();
    for r in 1..=tu.steps.len().max(tw.steps.len()) {
        let known_u = uni.prepare(tu.set(r))?;
        let pts = opts.sampler.sample(&uni, &uni.prepare(&uni.full_set(tu.set(r)))?, 2000 + r as u64);
        let verdict_u = classify(&uni, &known_u, &pts, opts.solve_tol);
        let accepted: Vec<Point> = pts
            .iter()
            .zip(verdict_u)
            .filter(|(_, v)| matches!(v, Ok(s) if s.solvable))
            .map(|(p, _)| res.localize(p))
            .collect::<Result<_>>()?;
        let known_w = res.prepare(tw.set(r))?;
        let mut violations = 0;
        let verdict_w = accepted
            .iter()
            .map(|p| {
                if known_w.violation_at(p)? > known_w.tol {
                    return Ok(false);
                }
                Ok(classify(&res, &known_w, std::slice::from_ref(p), opts.solve_tol)
                    .pop()
                    .map(|v| matches!(v, Ok(s) if s.solvable))
                    .unwrap_or(false))
            })
            .collect::<Result<Vec<bool>>>()?;
        violations += verdict_w.iter().filter(|ok| !**ok).count();
        out.push(InclusionRow { r, checked: accepted.len(), violations });
    }
    Ok(out)
}

/// `Γ_s`: at `z`, solve the Hamiltonian system at `Leg(z)` with tangency to
/// `known`, then transport the solution to `Z`. Only the `Γ^i_μ` are
/// populated, as opaque functions of the `Z` coordinates (the rest of the
/// lift is not needed by the β section).
pub fn gamma_s(th: &Arc<LagrangianTheory>, ham: &Arc<Problem>, known: &Arc<Prepared>) -> Result<ConnectionCoeffs<Expr>> {
    let leg = Arc::new(legendre_map(th)?);
    let zspace = th.chart.layer(Layer::Z).clone();
    let args: Vec<Expr> = zspace.coords().iter().map(|c| Expr::coord(*c)).collect();
    let mut out = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
    for mu in 0..th.n() {
        for i in 0..th.m() {
            let (th2, ham, known, leg, zspace) = (th.clone(), ham.clone(), known.clone(), leg.clone(), zspace.clone());
            let f = ExternalFn::new(format!("gamma_s_{i}_{mu}"), move |x: &[f64]| {
                let z = Point::new(zspace.clone(), x.to_vec());
                let eval = || -> Result<f64> {
                    let img = legendre_point(&th2, &leg, &z)?;
                    let sys = ham.assemble_with(&img, &known, false)?;
                    let sol = solve_pointwise(&sys, SOLVE_TOL);
                    let tilde = sys.coefficients(ConnectionKind::HamiltonianZstar, th2.chart.clone(), &sol.solution)?;
                    Ok(tilde.gamma(i, mu))
                };
                eval().unwrap_or(f64::NAN)
            });
            out.set(mu, CoordId::fiber(i), Expr::external(Arc::new(f), args.clone()))?;
        }
    }
    Ok(out)
}
