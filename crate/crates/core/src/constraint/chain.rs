use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::problem::{Prepared, Problem};
use super::sampler::Sampler;
use super::system::{solve_pointwise, RowKey, SolveResult, SOLVE_TOL};
use crate::bundle::{hessian, Formalism, LagrangianTheory};
use crate::connection::{ConstraintSet, Provenance};
use crate::error::{Error, Result};
use crate::expr::{CoordId, Expr, ExternalFn, Point};
use crate::linalg;

/// Where new constraint functions may come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondaryMode {
    /// Registered or cokernel-derived functions, numeric ones otherwise.
    #[default]
    Auto,
    /// Fail with `NoCokernelRegistered` when nothing symbolic is available.
    Symbolic,
    Numeric,
}

#[derive(Debug, Clone)]
pub struct ChainOptions {
    pub max_steps: usize,
    pub sampler: Sampler,
    pub solve_tol: f64,
    pub mode: SecondaryMode,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { max_steps: 5, sampler: Sampler::default(), solve_tol: SOLVE_TOL, mode: SecondaryMode::Auto }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub r: usize,
    pub constraints: Vec<String>,
    /// Fraction of the sampled points of this set where the system with
    /// tangency rows is solvable.
    pub accepted_fraction: f64,
    /// Largest relative solve residual among accepted points.
    pub max_residual: f64,
    pub samples: usize,
    /// Points of this set rejected by the previous step's classifier; any
    /// nonzero count means the added functions cut out too much.
    pub disagreements: usize,
    pub added: Option<Provenance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmTrace {
    pub formalism: Formalism,
    pub steps: Vec<TraceStep>,
    pub stabilized: bool,
    /// Chain functions of `S_r` (frame excluded), at index `r − 1`.
    #[serde(skip)]
    pub sets: Vec<ConstraintSet>,
}

impl AlgorithmTrace {
    /// Index at which the chain stabilized.
    pub fn final_step(&self) -> Option<usize> {
        self.stabilized.then(|| self.steps.len())
    }

    /// `S_r`, or the last computed set beyond the end of the chain.
    pub fn set(&self, r: usize) -> &ConstraintSet {
        &self.sets[(r.max(1) - 1).min(self.sets.len() - 1)]
    }
}

/// Solve the system at every point, in parallel.
pub fn classify(problem: &Problem, known: &Prepared, pts: &[Point], tol: f64) -> Vec<Result<SolveResult>> {
    pts.par_iter().map(|pt| problem.assemble(pt, known).map(|s| solve_pointwise(&s, tol))).collect()
}

/// `κ_i [∂L/∂y^i − ∂²L/∂x^μ∂z^i_μ − z^j_μ ∂²L/∂y^j∂z^i_μ]`, the first
/// consistency conditions along the Hessian cokernel; in the Hamiltonian
/// setting `κ_i ∂H/∂y^i`. `None` if no cokernel is registered.
pub fn cokernel_constraints(problem: &Problem) -> Result<Option<Vec<Expr>>> {
    let th = &problem.theory;
    let Some(basis) = &th.cokernel else { return Ok(None) };
    check_cokernel(th)?;
    let chart = &th.chart;
    let (n, m) = (th.n(), th.m());
    let mut out = Vec::new();
    for kappa in basis {
        let mut terms = Vec::new();
        for (i, k) in kappa {
            let e = if problem.formalism == Formalism::Hamiltonian {
                th.hamiltonian()?.h.diff(CoordId::fiber(*i))?
            } else {
                let l = &th.lagrangian;
                let mut parts = vec![l.diff(CoordId::fiber(*i))?];
                for mu in 0..n {
                    let dz = l.diff(CoordId::jet(*i, mu))?;
                    parts.push(dz.diff(CoordId::base(mu))?.neg());
                    for j in 0..m {
                        parts.push((Expr::coord(CoordId::jet(j, mu)) * dz.diff(CoordId::fiber(j))?).neg());
                    }
                }
                Expr::sum(parts)
            };
            terms.push(k.clone() * e);
        }
        let c = Expr::sum(terms);
        if let Some(bad) = c.free_coords().into_iter().find(|x| !problem.space.contains(*x)) {
            return Err(Error::LayerMismatch(format!(
                "cokernel constraint uses `{}`, which is not on this layer",
                chart.name(bad)
            )));
        }
        out.push(c);
    }
    Ok(Some(out))
}

/// The registered basis must annihilate the Hessian; checked at a few
/// deterministic points of the sampling box.
fn check_cokernel(th: &LagrangianTheory) -> Result<()> {
    let Some(basis) = &th.cokernel else { return Ok(()) };
    let hess = hessian(th)?;
    let n = th.n();
    let sampler = Sampler::default().with_seed(0xc0c0);
    let problem = Problem::new(Arc::new(th.clone()), Formalism::Lagrangian)?;
    let mut checked = 0;
    for j in 0..40 {
        if checked == 5 {
            break;
        }
        let pt = sampler.candidate(&problem, 0, j);
        let Ok(h) = crate::bundle::eval_matrix(&hess, &pt) else { continue };
        let scale = h.amax().max(1.0);
        for kappa in basis {
            let k: Vec<(usize, f64)> =
                kappa.iter().map(|(i, e)| e.eval(&pt).map(|v| (*i, v))).collect::<std::result::Result<_, _>>()?;
            for col in 0..h.ncols() {
                let mut s = 0.0;
                for (i, v) in &k {
                    for mu in 0..n {
                        s += v * h[(i * n + mu, col)];
                    }
                }
                if s.abs() > 1e-9 * scale {
                    return Err(Error::InvalidArgument(
                        "registered cokernel basis does not annihilate the Hessian".into(),
                    ));
                }
            }
        }
        checked += 1;
    }
    Ok(())
}

/// Functions `c_j(x) = u_jᵀ (I − M M⁺) b` at `x`, with `u_j` spanning the
/// inconsistencies observed at `rejected`. Each is an opaque function of all
/// coordinates of the problem's space; derivatives are finite differences.
pub fn numeric_constraints(problem: &Arc<Problem>, known: &Arc<Prepared>, rejected: &[Point]) -> Result<Vec<Expr>> {
    let mut keys: BTreeMap<RowKey, usize> = BTreeMap::new();
    let mut vecs: Vec<BTreeMap<RowKey, f64>> = Vec::new();
    for pt in rejected.iter().take(64) {
        let sys = problem.assemble(pt, known)?;
        let r = sys.inconsistency();
        let mut v = BTreeMap::new();
        for (k, x) in sys.rows.iter().zip(r.iter()) {
            let next = keys.len();
            keys.entry(k.clone()).or_insert(next);
            v.insert(k.clone(), *x);
        }
        vecs.push(v);
    }
    if vecs.is_empty() {
        return Ok(Vec::new());
    }
    let order: Vec<RowKey> = {
        let mut o = vec![RowKey::Tangency { constraint: 0, mu: 0 }; keys.len()];
        for (k, i) in &keys {
            o[*i] = k.clone();
        }
        o
    };
    let data = DMatrix::from_fn(order.len(), vecs.len(), |r, c| vecs[c].get(&order[r]).copied().unwrap_or(0.0));
    let basis = linalg::row_space(&data.transpose(), 1e-6);
    let coords: Vec<CoordId> = problem.space.coords().to_vec();
    let args: Vec<Expr> = coords.iter().map(|c| Expr::coord(*c)).collect();
    let mut out = Vec::new();
    for j in 0..basis.nrows() {
        let u: BTreeMap<RowKey, f64> = order.iter().enumerate().map(|(r, k)| (k.clone(), basis[(j, r)])).collect();
        let (p, kn, space) = (problem.clone(), known.clone(), problem.space.clone());
        let f = ExternalFn::new(format!("residual_{}_{j}", problem.formalism.label()), move |x: &[f64]| {
            let pt = Point::new(space.clone(), x.to_vec());
            match p.assemble_with(&pt, &kn, false) {
                Ok(sys) => sys.rows.iter().zip(sys.inconsistency().iter()).map(|(k, v)| u.get(k).copied().unwrap_or(0.0) * v).sum(),
                Err(_) => f64::NAN,
            }
        });
        out.push(Expr::external(Arc::new(f), args.clone()));
    }
    Ok(out)
}

/// New functions for `S_step` given the chain functions `prior` of
/// `S_{step−1}` and some of its rejected points.
pub fn secondary_constraints(
    problem: &Arc<Problem>,
    step: usize,
    prior: &ConstraintSet,
    mode: SecondaryMode,
    rejected: &[Point],
) -> Result<(Vec<Expr>, Provenance)> {
    if mode != SecondaryMode::Numeric {
        let th = &problem.theory;
        let key = match problem.formalism {
            Formalism::UnifiedRestricted => Formalism::Unified,
            f => f,
        };
        if let Some(found) = th.registered.get(&key).and_then(|r| r.get(step.wrapping_sub(2))) {
            return Ok((found.clone(), Provenance::SecondarySymbolic));
        }
        if step == 2 {
            if let Some(c) = cokernel_constraints(problem)? {
                return Ok((c, Provenance::SecondarySymbolic));
            }
        }
        if mode == SecondaryMode::Symbolic {
            return Err(Error::NoCokernelRegistered(th.name.clone()));
        }
    }
    let known = Arc::new(problem.prepare(prior)?);
    Ok((numeric_constraints(problem, &known, rejected)?, Provenance::NumericOnly))
}

/// Iterate `S_{r+1} = {x ∈ S_r : the system with tangency to S_r is
/// solvable at x}` until every sampled point of some `S_r` is accepted.
pub fn run_algorithm(problem: &Arc<Problem>, opts: &ChainOptions) -> Result<AlgorithmTrace> {
    let mut sets = vec![problem.primary.clone()];
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut added = None;
    let mut stabilized = false;
    for r in 1..=opts.max_steps.max(1) {
        let chain = sets[r - 1].clone();
        let known = problem.prepare(&chain)?;
        let full = problem.prepare(&problem.full_set(&chain))?;
        let pts = opts.sampler.sample(problem, &full, r as u64);
        if pts.is_empty() {
            return Err(Error::DegenerateStructure(format!(
                "{}: no points found on the step-{r} set",
                problem.formalism.label()
            )));
        }
        let disagreements = if r > 1 {
            let prev = problem.prepare(&sets[r - 2])?;
            classify(problem, &prev, &pts, opts.solve_tol).iter().filter(|s| !matches!(s, Ok(s) if s.solvable)).count()
        } else {
            0
        };
        let results = classify(problem, &known, &pts, opts.solve_tol);
        let mut accepted = 0;
        let mut max_residual: f64 = 0.0;
        let mut rejected = Vec::new();
        for (pt, res) in pts.iter().zip(results) {
            match res {
                Ok(s) if s.solvable => {
                    accepted += 1;
                    max_residual = max_residual.max(s.residual);
                }
                Ok(_) => rejected.push(pt.clone()),
                Err(e) => return Err(e),
            }
        }
        steps.push(TraceStep {
            r,
            constraints: problem.describe(&chain),
            accepted_fraction: accepted as f64 / pts.len() as f64,
            max_residual,
            samples: pts.len(),
            disagreements,
            added,
        });
        if accepted == pts.len() {
            stabilized = true;
            break;
        }
        if r == opts.max_steps {
            break;
        }
        let (new, prov) = secondary_constraints(problem, r + 1, &chain, opts.mode, &rejected)?;
        let mut next = chain;
        next.extend(new, prov);
        added = Some(prov);
        sets.push(next);
    }
    Ok(AlgorithmTrace { formalism: problem.formalism, steps, stabilized, sets })
}
