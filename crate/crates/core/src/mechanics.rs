//! Time-dependent mechanics (`n = 1`): cosymplectic pairs and their Reeb
//! fields, trajectories, and a brute-force presymplectic oracle for the
//! unified constraint chain.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bundle::{
    hamiltonian_forms, h0, omega_wbar1, poincare_cartan, wbar1_parametrization, BundleChart, Formalism,
    LagrangianTheory, Layer,
};
use crate::connection::{ConnectionKind, ConstraintSet, Provenance};
use crate::constraint::{classify, run_algorithm, AlgorithmTrace, ChainOptions, Prepared, Problem, Sampler, TraceStep};
use crate::error::{Error, Result};
use crate::exterior::{contraction_matrix, is_cosymplectic, Form, VectorField};
use crate::expr::{equiv_probabilistic, CoordId, CoordSpace, EquivOptions, Expr, Point};
use crate::{linalg, ode};

/// Relative rank floor for the Reeb and oracle systems.
const RANK_FLOOR: f64 = 1e-12;

fn require_mechanics(th: &LagrangianTheory) -> Result<()> {
    if th.n() != 1 {
        return Err(Error::Dimension(format!("mechanics needs one base coordinate, `{}` has {}", th.name, th.n())));
    }
    Ok(())
}

/// `(Ω, η)` on an odd-dimensional chart; the Reeb field solves
/// `i_ξΩ = 0`, `η(ξ) = 1`.
#[derive(Debug, Clone)]
pub struct ReebProblem {
    pub omega: Form<Expr>,
    pub eta: Form<Expr>,
    pub space: Arc<CoordSpace>,
}

impl ReebProblem {
    /// Checks degrees, odd dimension, that the forms live on `space`, and
    /// closedness (probabilistically, coefficient by coefficient).
    pub fn new(omega: Form<Expr>, eta: Form<Expr>, space: Arc<CoordSpace>) -> Result<Self> {
        if omega.degree() != 2 || eta.degree() != 1 {
            return Err(Error::DimensionMismatch("expected a 2-form and a 1-form".into()));
        }
        if space.dim() % 2 == 0 {
            return Err(Error::DimensionMismatch(format!("chart dimension {} is even", space.dim())));
        }
        for f in [&omega, &eta] {
            if let Some(c) = f.coords().into_iter().find(|c| !space.contains(*c)) {
                return Err(Error::ChartMismatch(format!("form uses {c:?}, which is not a chart coordinate")));
            }
            let opts = EquivOptions { trials: 8, ..EquivOptions::default() };
            for (_, c) in f.exterior_d()?.terms() {
                if !equiv_probabilistic(c, &Expr::zero(), &opts)? {
                    return Err(Error::NotClosed);
                }
            }
        }
        Ok(ReebProblem { omega, eta, space })
    }

    /// `(Ω_L, dt)` on `Z`.
    pub fn lagrangian(th: &LagrangianTheory) -> Result<Self> {
        require_mechanics(th)?;
        let (_, omega) = poincare_cartan(th)?;
        ReebProblem::new(omega, Form::d_coord(CoordId::base(0)), th.chart.layer(Layer::Z).clone())
    }

    /// `(Ω_h, dt)` on `Z*`; only for theories without Hamiltonian constraints.
    pub fn hamiltonian(th: &LagrangianTheory) -> Result<Self> {
        require_mechanics(th)?;
        let hd = th.hamiltonian()?;
        if !hd.constraints.is_empty() {
            return Err(Error::InvalidArgument("the Hamiltonian side is constrained; no cosymplectic pair on Z*".into()));
        }
        let (_, omega) = hamiltonian_forms(hd)?;
        ReebProblem::new(omega, Form::d_coord(CoordId::base(0)), th.chart.layer(Layer::ZStar).clone())
    }

    /// `Ω_{H₀}` pulled back to `W̄₁`, charted by `Z`, with `dt`.
    pub fn unified(th: &LagrangianTheory) -> Result<Self> {
        require_mechanics(th)?;
        ReebProblem::new(omega_wbar1(th)?, Form::d_coord(CoordId::base(0)), th.chart.layer(Layer::Z).clone())
    }

    /// `[i_·Ω ; η]` and right-hand side `(0, …, 0, 1)` at `pt`.
    pub fn system(&self, pt: &Point) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let pt = pt.project_to(&self.space);
        let coords = self.space.coords();
        let w = contraction_matrix(&self.omega.eval(&pt)?, coords);
        let eta = self.eta.eval(&pt)?;
        let rows = w.nrows() + 1;
        let mut m = DMatrix::zeros(rows, coords.len());
        m.view_mut((0, 0), (w.nrows(), w.ncols())).copy_from(&w);
        for (j, c) in coords.iter().enumerate() {
            m[(rows - 1, j)] = eta.coeff(&[*c]);
        }
        let mut b = DVector::zeros(rows);
        b[rows - 1] = 1.0;
        Ok((m, b))
    }

    pub fn is_cosymplectic_at(&self, pts: &[Point], tol: f64) -> Result<bool> {
        is_cosymplectic(&self.omega, &self.eta, pts, tol)
    }
}

/// The Reeb field at `pt`; `DegenerateStructure` unless the system has a
/// unique exact solution.
pub fn reeb_field(rp: &ReebProblem, pt: &Point) -> Result<VectorField<f64>> {
    let (m, b) = rp.system(pt)?;
    let ls = linalg::lstsq_min_norm(&m, &b, RANK_FLOOR);
    let residual = ls.residual.norm();
    if ls.nullity > 0 || residual > 1e-8 {
        return Err(Error::DegenerateStructure(format!(
            "Reeb system has nullity {} and residual {residual:.3e}",
            ls.nullity
        )));
    }
    let mut xi = VectorField::zero();
    for (c, v) in rp.space.coords().iter().zip(ls.x.iter()) {
        xi.set(*c, *v);
    }
    Ok(xi)
}

/// `max_i |ξ(y^i) − z^i|` at `pt`: zero iff `ξ` is a second-order field.
pub fn sode_defect(chart: &BundleChart, xi: &VectorField<f64>, pt: &Point) -> Result<f64> {
    if chart.n != 1 {
        return Err(Error::Dimension(format!("second-order check needs n = 1, got {}", chart.n)));
    }
    let mut worst: f64 = 0.0;
    for i in 0..chart.m {
        let z = CoordId::jet(i, 0);
        let v = pt.get(z).ok_or_else(|| Error::LayerMismatch(format!("point lacks {}", chart.name(z))))?;
        worst = worst.max((xi.get(CoordId::fiber(i)) - v).abs());
    }
    Ok(worst)
}

/// States on a uniform time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub coords: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub step: f64,
    pub method: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn point(&self, k: usize, space: &Arc<CoordSpace>) -> Point {
        Point::new(space.clone(), self.states[k].clone())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.coords.iter().position(|c| c == name)?;
        Some(self.states.iter().map(|s| s[j]).collect())
    }
}

/// RK4 integral curve of `field` (components in `x0`'s coordinate order).
pub fn integrate<F>(chart: &BundleChart, field: F, x0: &Point, horizon: f64, step: f64) -> Result<Trajectory>
where
    F: Fn(&Point) -> Result<Vec<f64>>,
{
    let space = x0.space.clone();
    let (times, states) = ode::rk4(|x| field(&Point::new(space.clone(), x.to_vec())), &x0.values, horizon, step)?;
    let step = if times.len() > 1 { times[1] - times[0] } else { step };
    Ok(Trajectory {
        coords: space.coords().iter().map(|c| chart.name(*c)).collect(),
        times,
        states,
        step,
        method: "rk4".into(),
    })
}

/// Integral curve of the Reeb field of `rp`.
pub fn reeb_trajectory(rp: &ReebProblem, chart: &BundleChart, x0: &Point, horizon: f64, step: f64) -> Result<Trajectory> {
    let x0 = x0.project_to(&rp.space);
    let coords = rp.space.coords().to_vec();
    integrate(
        chart,
        |p| {
            let xi = reeb_field(rp, p)?;
            Ok(coords.iter().map(|c| xi.get(*c)).collect())
        },
        &x0,
        horizon,
        step,
    )
}

/// The point of `W̄₁ ⊂ W₀` over `z`.
pub fn lift_to_wbar1(th: &LagrangianTheory, z: &Point) -> Result<Point> {
    let par = wbar1_parametrization(th)?;
    let space = th.chart.layer(Layer::W0).clone();
    let mut out = Point::zeros(space.clone());
    for (k, c) in space.coords().iter().enumerate() {
        out.values[k] = match par.get(c) {
            Some(e) => e.eval(z)?,
            None => z.get(*c).ok_or_else(|| Error::LayerMismatch(format!("point lacks {}", th.chart.name(*c))))?,
        };
    }
    Ok(out)
}

/// Horizontal field of the unified formalism on `W₀`, tangent to a chain set.
pub struct UnifiedFlow {
    pub problem: Arc<Problem>,
    pub known: Prepared,
    pub tol: f64,
}

impl UnifiedFlow {
    pub fn new(th: Arc<LagrangianTheory>, chain: &ConstraintSet) -> Result<Self> {
        require_mechanics(&th)?;
        let problem = Arc::new(Problem::new(th, Formalism::Unified)?);
        let known = problem.prepare(chain)?;
        Ok(UnifiedFlow { problem, known, tol: crate::constraint::SOLVE_TOL })
    }

    /// Unified flow tangent to `W̄₁`.
    pub fn on_wbar1(th: Arc<LagrangianTheory>) -> Result<Self> {
        let primary = crate::constraint::primary_constraints_unified(&th)?;
        UnifiedFlow::new(th, &primary)
    }

    /// Unified flow on the final set of the unified chain.
    pub fn on_final_set(th: Arc<LagrangianTheory>, opts: &ChainOptions) -> Result<(Self, AlgorithmTrace)> {
        let flow = UnifiedFlow::new(th.clone(), &ConstraintSet::new(Layer::W0))?;
        let trace = run_algorithm(&flow.problem, opts)?;
        if !trace.stabilized {
            return Err(Error::DegenerateStructure(format!(
                "the unified chain of `{}` does not stabilize within {} steps",
                th.name, opts.max_steps
            )));
        }
        let known = flow.problem.prepare(trace.sets.last().expect("a stabilized trace has sets"))?;
        Ok((UnifiedFlow { known, ..flow }, trace))
    }

    /// `h(∂/∂t)` at `pt`, minimum-norm among the solutions.
    pub fn field_at(&self, pt: &Point) -> Result<Vec<f64>> {
        let sys = self.problem.assemble_with(pt, &self.known, false)?;
        let sol = crate::constraint::solve_pointwise(&sys, self.tol);
        if !sol.solvable {
            return Err(Error::DegenerateStructure(format!(
                "no tangent horizontal field at this point (residual {:.3e})",
                sol.residual
            )));
        }
        let c = sys.coefficients(ConnectionKind::UnifiedW0, self.problem.chart.clone(), &sol.solution)?;
        let lift = c.lift(0);
        Ok(self.problem.space.coords().iter().map(|x| lift.get(*x)).collect())
    }

    pub fn trajectory(&self, x0: &Point, horizon: f64, step: f64) -> Result<Trajectory> {
        let x0 = self.problem.localize(x0)?;
        let v = self.known.violation_at(&x0)?;
        if v > self.known.tol {
            return Err(Error::PointOffConstraint(v));
        }
        integrate(&self.problem.chart, |p| self.field_at(p), &x0, horizon, step)
    }
}

/// `max_k |H₀(x_k) − H₀(x_0)|` along a `W₀` trajectory.
pub fn h0_drift(th: &LagrangianTheory, traj: &Trajectory) -> Result<f64> {
    let space = th.chart.layer(Layer::W0).clone();
    let h = h0(th);
    let first = h.eval(&traj.point(0, &space))?;
    let mut worst: f64 = 0.0;
    for k in 1..traj.len() {
        worst = worst.max((h.eval(&traj.point(k, &space))? - first).abs());
    }
    Ok(worst)
}

/// Largest Euler–Lagrange residual `|∂L/∂y^i − d/dt ∂L/∂v^i|` along a
/// trajectory carrying the `Z` coordinates, with central differences in time
/// (interior samples only).
pub fn el_residual(th: &LagrangianTheory, traj: &Trajectory, space: &Arc<CoordSpace>) -> Result<f64> {
    require_mechanics(th)?;
    let zspace = th.chart.layer(Layer::Z).clone();
    let mut dl_dy = Vec::new();
    let mut dl_dv = Vec::new();
    for i in 0..th.m() {
        dl_dy.push(th.lagrangian.diff(CoordId::fiber(i))?);
        dl_dv.push(th.lagrangian.diff(CoordId::jet(i, 0))?);
    }
    let pts: Vec<Point> = (0..traj.len()).map(|k| traj.point(k, space).project_to(&zspace)).collect();
    let mom: Vec<Vec<f64>> =
        pts.iter().map(|p| dl_dv.iter().map(|e| e.eval(p)).collect::<std::result::Result<_, _>>()).collect::<std::result::Result<_, _>>()?;
    let mut worst: f64 = 0.0;
    for k in 1..traj.len().saturating_sub(1) {
        let dt = traj.times[k + 1] - traj.times[k - 1];
        for i in 0..th.m() {
            let r = dl_dy[i].eval(&pts[k])? - (mom[k + 1][i] - mom[k - 1][i]) / dt;
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

/// `max_k max_i |dy^i/dt − v^i|` by central differences: the trajectory is
/// the prolongation of its projection.
pub fn holonomy_defect(th: &LagrangianTheory, traj: &Trajectory) -> Result<f64> {
    require_mechanics(th)?;
    let mut worst: f64 = 0.0;
    for i in 0..th.m() {
        let y = traj.column(&th.chart.name(CoordId::fiber(i))).ok_or_else(|| Error::LayerMismatch("no fiber column".into()))?;
        let v = traj.column(&th.chart.name(CoordId::jet(i, 0))).ok_or_else(|| Error::LayerMismatch("no velocity column".into()))?;
        for k in 1..traj.len().saturating_sub(1) {
            let d = (y[k + 1] - y[k - 1]) / (traj.times[k + 1] - traj.times[k - 1]);
            worst = worst.max((d - v[k]).abs());
        }
    }
    Ok(worst)
}

/// Oracle membership test at `pt`: is there `ξ` tangent to the zero set of
/// `set` (tangent space = kernel of the gradients) with `i_ξΩ_{H₀} = 0` and
/// `dt(ξ) = 1`? Returns the verdict and the relative residual.
pub fn oracle_accepts(problem: &Problem, set: &Prepared, pt: &Point, tol: f64) -> Result<(bool, f64)> {
    let coords = problem.space.coords();
    let dim = coords.len();
    let tangent = if set.is_empty() {
        DMatrix::identity(dim, dim)
    } else {
        linalg::null_space(&set.jacobian_at(pt)?, RANK_FLOOR)
    };
    if tangent.ncols() == 0 {
        return Ok((false, 1.0));
    }
    let w = contraction_matrix(&problem.omega.eval(pt)?, coords);
    let t = coords.iter().position(|c| *c == CoordId::base(0)).expect("time coordinate");
    let mut m = DMatrix::zeros(w.nrows() + 1, tangent.ncols());
    m.view_mut((0, 0), (w.nrows(), tangent.ncols())).copy_from(&(&w * &tangent));
    for j in 0..tangent.ncols() {
        m[(w.nrows(), j)] = tangent[(t, j)];
    }
    let mut b = DVector::zeros(w.nrows() + 1);
    b[w.nrows()] = 1.0;
    let ls = linalg::lstsq_min_norm(&m, &b, RANK_FLOOR);
    let residual = ls.residual.norm();
    Ok((residual <= tol, residual))
}

/// The unified chain computed by brute force: each step's set is the
/// previous one plus the next registered functions, and membership is
/// decided by [`oracle_accepts`]. Stops when every sample is accepted, or
/// unstabilized when the registered functions run out.
pub fn presymplectic_chain_oracle(th: &Arc<LagrangianTheory>, sampler: &Sampler, max_steps: usize, tol: f64) -> Result<AlgorithmTrace> {
    require_mechanics(th)?;
    let problem = Problem::new(th.clone(), Formalism::Unified)?;
    let registered: Vec<Vec<Expr>> = th.registered.get(&Formalism::Unified).cloned().unwrap_or_default();
    let mut sets = vec![problem.primary.clone()];
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut stabilized = false;
    for r in 1..=max_steps.max(1) {
        let set = problem.prepare(&sets[r - 1])?;
        let pts = sampler.sample(&problem, &set, r as u64);
        if pts.is_empty() {
            return Err(Error::DegenerateStructure(format!("no points found on oracle step {r}")));
        }
        let mut accepted = 0;
        let mut max_residual: f64 = 0.0;
        for pt in &pts {
            let (ok, res) = oracle_accepts(&problem, &set, pt, tol)?;
            if ok {
                accepted += 1;
                max_residual = max_residual.max(res);
            }
        }
        let disagreements = if r > 1 {
            let prev = problem.prepare(&sets[r - 2])?;
            let mut d = 0;
            for pt in &pts {
                if !oracle_accepts(&problem, &prev, pt, tol)?.0 {
                    d += 1;
                }
            }
            d
        } else {
            0
        };
        steps.push(TraceStep {
            r,
            constraints: problem.describe(&sets[r - 1]),
            accepted_fraction: accepted as f64 / pts.len() as f64,
            max_residual,
            samples: pts.len(),
            disagreements,
            added: (r > 1).then_some(Provenance::SecondarySymbolic),
        });
        if accepted == pts.len() {
            stabilized = true;
            break;
        }
        let Some(next) = registered.get(r - 1) else { break };
        if r == max_steps {
            break;
        }
        let mut s = sets[r - 1].clone();
        s.extend(next.iter().cloned(), Provenance::SecondarySymbolic);
        sets.push(s);
    }
    Ok(AlgorithmTrace { formalism: Formalism::Unified, steps, stabilized, sets })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub r: usize,
    pub samples: usize,
    pub engine_accepted: usize,
    pub oracle_accepted: usize,
    /// Points whose verdicts differ, counting set membership.
    pub disagreements: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub rows: Vec<OracleRow>,
    pub engine_final: Option<usize>,
    pub oracle_final: Option<usize>,
    pub agree: bool,
}

/// Run the engine's unified chain and the oracle, then compare verdicts
/// step by step on fresh samples drawn from both step-`r` sets.
pub fn compare_with_oracle(th: &Arc<LagrangianTheory>, opts: &ChainOptions) -> Result<OracleComparison> {
    let problem = Arc::new(Problem::new(th.clone(), Formalism::Unified)?);
    let engine = run_algorithm(&problem, opts)?;
    let oracle = presymplectic_chain_oracle(th, &opts.sampler, opts.max_steps, opts.solve_tol)?;
    let mut rows = Vec::new();
    for r in 1..=engine.steps.len().max(oracle.steps.len()) {
        let es = problem.prepare(engine.set(r))?;
        let os = problem.prepare(oracle.set(r))?;
        let mut pts = opts.sampler.sample(&problem, &os, 3000 + r as u64);
        pts.extend(opts.sampler.sample(&problem, &es, 4000 + r as u64));
        let verdict = classify(&problem, &es, &pts, opts.solve_tol);
        let (mut ea, mut oa, mut dis) = (0, 0, 0);
        for (pt, v) in pts.iter().zip(verdict) {
            let e = es.violation_at(pt)? <= es.tol && matches!(v, Ok(s) if s.solvable);
            let o = os.violation_at(pt)? <= os.tol && oracle_accepts(&problem, &os, pt, opts.solve_tol)?.0;
            ea += e as usize;
            oa += o as usize;
            dis += (e != o) as usize;
        }
        rows.push(OracleRow { r, samples: pts.len(), engine_accepted: ea, oracle_accepted: oa, disagreements: dis });
    }
    let agree = rows.iter().all(|r| r.disagreements == 0)
        && engine.stabilized == oracle.stabilized
        && engine.final_step() == oracle.final_step();
    Ok(OracleComparison { rows, engine_final: engine.final_step(), oracle_final: oracle.final_step(), agree })
}

/// Names to values on `space`; unnamed coordinates are zero.
pub fn point_from_names(chart: &BundleChart, space: &Arc<CoordSpace>, values: &HashMap<String, f64>) -> Result<Point> {
    let mut pt = Point::zeros(space.clone());
    for (name, v) in values {
        let c = chart.coord(name).ok_or_else(|| Error::InvalidArgument(format!("unknown coordinate `{name}`")))?;
        if !pt.set(c, *v) {
            return Err(Error::LayerMismatch(format!("`{name}` is not a coordinate of this layer")));
        }
    }
    Ok(pt)
}
