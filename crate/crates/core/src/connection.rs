//! Connection coefficients, constraint sets, and the pointwise diagnostics
//! built on them: semiholonomy, projectability, the β section and tangency.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{legendre_map, BundleChart, Layer, LagrangianTheory};
use crate::error::{Error, Result};
use crate::exterior::{Coefficient, Projector, VectorField, VerticalTensor};
use crate::expr::{CoordId, CoordSpace, Expr, Lookup, Point, Space};
use crate::linalg;
use crate::ode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConnectionKind {
    /// `Γ^i_μ` on `∂/∂y^i`, `Γ^i_{νμ}` on `∂/∂z^i_ν`.
    LagrangianZ,
    /// `Γ̃^i_μ` on `∂/∂y^i`, `Γ̃^ν_{iμ}` on `∂/∂p^ν_i`.
    HamiltonianZstar,
    /// `A^i_μ`, `B_μ`, `C^ν_{μi}`, `D^i_{μν}` on `∂/∂y^i`, `∂/∂p`,
    /// `∂/∂p^ν_i`, `∂/∂z^i_ν`.
    UnifiedW0,
}

impl ConnectionKind {
    pub fn layer(self) -> Layer {
        match self {
            ConnectionKind::LagrangianZ => Layer::Z,
            ConnectionKind::HamiltonianZstar => Layer::ZStar,
            ConnectionKind::UnifiedW0 => Layer::W0,
        }
    }

    /// Conventional symbol of the coefficient multiplying `∂/∂c`.
    pub fn symbol(self, c: CoordId) -> &'static str {
        match (self, c.space) {
            (ConnectionKind::LagrangianZ, _) => "Gamma",
            (ConnectionKind::HamiltonianZstar, _) => "GammaTilde",
            (ConnectionKind::UnifiedW0, Space::Fiber) => "A",
            (ConnectionKind::UnifiedW0, Space::MomentumP) => "B",
            (ConnectionKind::UnifiedW0, Space::MomentumPmu) => "C",
            (ConnectionKind::UnifiedW0, _) => "D",
        }
    }
}

/// Coefficients of the horizontal lifts `h(∂/∂x^μ) = ∂/∂x^μ + Σ_c lift[(μ, c)] ∂/∂c`
/// over the non-base coordinates `c` of the formalism's layer.
#[derive(Debug, Clone)]
pub struct ConnectionCoeffs<C> {
    pub kind: ConnectionKind,
    pub chart: Arc<BundleChart>,
    pub lifts: BTreeMap<(usize, CoordId), C>,
}

impl<C: Coefficient> ConnectionCoeffs<C> {
    pub fn zero(kind: ConnectionKind, chart: Arc<BundleChart>) -> Self {
        ConnectionCoeffs { kind, chart, lifts: BTreeMap::new() }
    }

    pub fn space(&self) -> &Arc<CoordSpace> {
        self.chart.layer(self.kind.layer())
    }

    pub fn set(&mut self, mu: usize, c: CoordId, v: C) -> Result<()> {
        if mu >= self.chart.n || c.is_base() || !self.space().contains(c) {
            return Err(Error::ChartMismatch(format!(
                "no coefficient ({mu}, {}) for this connection",
                self.chart.name(c)
            )));
        }
        self.lifts.insert((mu, c), v);
        Ok(())
    }

    pub fn get(&self, mu: usize, c: CoordId) -> C {
        self.lifts.get(&(mu, c)).cloned().unwrap_or_else(C::zero)
    }

    /// `Γ^i_μ` (or `Γ̃^i_μ`, `A^i_μ`): the `∂/∂y^i` component of `h(∂/∂x^μ)`.
    pub fn gamma(&self, i: usize, mu: usize) -> C {
        self.get(mu, CoordId::fiber(i))
    }

    pub fn lift(&self, mu: usize) -> VectorField<C> {
        let mut v = VectorField::coord(CoordId::base(mu));
        for ((nu, c), x) in &self.lifts {
            if *nu == mu {
                v.set(*c, x.clone());
            }
        }
        v
    }
}

impl ConnectionCoeffs<Expr> {
    pub fn eval<L: Lookup + ?Sized>(&self, at: &L) -> Result<ConnectionCoeffs<f64>> {
        let mut lifts = BTreeMap::new();
        for (k, e) in &self.lifts {
            lifts.insert(*k, e.eval(at)?);
        }
        Ok(ConnectionCoeffs { kind: self.kind, chart: self.chart.clone(), lifts })
    }
}

/// `h = Σ_μ dx^μ ⊗ h(∂/∂x^μ)`.
pub fn projector_from_coeffs<C: Coefficient>(c: &ConnectionCoeffs<C>) -> Projector<C> {
    let lifts: Vec<(CoordId, VectorField<C>)> =
        (0..c.chart.n).map(|mu| (CoordId::base(mu), c.lift(mu))).collect();
    Projector::from_lifts(c.space().clone(), &lifts)
}

fn require_kind<C>(c: &ConnectionCoeffs<C>, kind: ConnectionKind) -> Result<()> {
    if c.kind != kind {
        return Err(Error::LayerMismatch(format!("expected {kind:?} coefficients, got {:?}", c.kind)));
    }
    Ok(())
}

/// `Γ^i_μ(pt) − z^i_μ(pt)` in jet order.
pub fn semiholonomic_defect(c: &ConnectionCoeffs<f64>, pt: &Point) -> Result<Vec<f64>> {
    require_kind(c, ConnectionKind::LagrangianZ)?;
    c.chart
        .jets()
        .iter()
        .map(|z| {
            let zv = pt.get(*z).ok_or_else(|| Error::LayerMismatch(format!("point lacks {}", c.chart.name(*z))))?;
            Ok(c.gamma(z.i as usize, z.mu as usize) - zv)
        })
        .collect()
}

/// The same defect read off `S_η(h(∂₀), …, h(∂_{n−1}))`; components agree with
/// [`semiholonomic_defect`] up to the orientation sign of `d^{n−1}x^ν`.
pub fn semiholonomic_tensor_defect(c: &ConnectionCoeffs<f64>, pt: &Point) -> Result<Vec<f64>> {
    require_kind(c, ConnectionKind::LagrangianZ)?;
    let lifts: Vec<VectorField<f64>> = (0..c.chart.n).map(|mu| c.lift(mu)).collect();
    let s = VerticalTensor::new(c.chart.n, c.chart.m).apply(pt, &lifts)?;
    Ok(c.chart.jets().iter().map(|z| s[z]).collect())
}

/// Random points of the fiber through `z0` spanned by `fiber` coordinates.
pub fn fiber_samples(z0: &Point, fiber: &[CoordId], count: usize, range: (f64, f64), seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![z0.clone()];
    for _ in 1..count.max(1) {
        let mut p = z0.clone();
        for c in fiber {
            p.set(*c, rng.gen_range(range.0..range.1));
        }
        out.push(p);
    }
    out
}

/// `max |Γ^i_μ(s) − Γ^i_μ(s₀)|` over samples that differ only in `fiber`.
pub fn projectability_defect(c: &ConnectionCoeffs<Expr>, samples: &[Point], fiber: &[CoordId]) -> Result<f64> {
    let Some(s0) = samples.first() else { return Ok(0.0) };
    for s in samples {
        if s.space.coords() != s0.space.coords() {
            return Err(Error::SampleMismatch("samples live on different charts".into()));
        }
        for (k, a) in s.space.coords().iter().enumerate() {
            if !fiber.contains(a) && (s.values[k] - s0.values[k]).abs() > 0.0 {
                return Err(Error::SampleMismatch(format!(
                    "samples differ in projected coordinate {}",
                    c.chart.name(*a)
                )));
            }
        }
    }
    let mut keys: Vec<(usize, CoordId)> = Vec::new();
    for mu in 0..c.chart.n {
        for i in 0..c.chart.m {
            keys.push((mu, CoordId::fiber(i)));
        }
    }
    let base: Vec<f64> = keys.iter().map(|(mu, y)| c.get(*mu, *y).eval(s0)).collect::<Result<_, _>>()?;
    let mut worst: f64 = 0.0;
    for s in &samples[1..] {
        for (k, (mu, y)) in keys.iter().enumerate() {
            worst = worst.max((c.get(*mu, *y).eval(s)? - base[k]).abs());
        }
    }
    Ok(worst)
}

/// Symbolic projectability: every `Γ^i_μ` has identically zero derivative
/// along the fiber coordinates (structural check).
pub fn is_projectable_symbolic(c: &ConnectionCoeffs<Expr>, fiber: &[CoordId]) -> Result<bool> {
    for mu in 0..c.chart.n {
        for i in 0..c.chart.m {
            let g = c.gamma(i, mu);
            for f in fiber {
                if !g.diff(*f)?.is_zero() {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

pub const DEFAULT_FIBER_SAMPLES: usize = 16;

/// `β(z₀)`: every `z^i_μ` replaced by `Γ^i_μ(z₀)`, after checking that `Γ`
/// is constant along the sampled fiber through `z₀`.
pub fn beta_point(c: &ConnectionCoeffs<Expr>, z0: &Point, fiber: &[CoordId], tol: f64) -> Result<Point> {
    require_kind(c, ConnectionKind::LagrangianZ)?;
    let samples = fiber_samples(z0, fiber, DEFAULT_FIBER_SAMPLES, (-2.0, 2.0), 0x5eed);
    let defect = projectability_defect(c, &samples, fiber)?;
    if defect > tol {
        return Err(Error::NotProjectable(defect));
    }
    let mut out = z0.clone();
    for z in c.chart.jets() {
        out.set(z, c.gamma(z.i as usize, z.mu as usize).eval(z0)?);
    }
    Ok(out)
}

/// Integrate `α' = (Γ^i_μ − z^i_μ) ∂/∂z^i_μ` from `z0` up to `horizon` with
/// RK4 and return the end point; converges to `β(z0)` for projectable `Γ`.
pub fn alpha_limit(c: &ConnectionCoeffs<Expr>, z0: &Point, horizon: f64, step: f64) -> Result<Point> {
    require_kind(c, ConnectionKind::LagrangianZ)?;
    let space = z0.space.clone();
    let jets: Vec<(usize, Expr)> = c
        .chart
        .jets()
        .iter()
        .map(|z| (space.position(*z).expect("jet coordinate in Z"), c.gamma(z.i as usize, z.mu as usize)))
        .collect();
    let field = |x: &[f64]| -> Result<Vec<f64>> {
        let p = Point::new(space.clone(), x.to_vec());
        let mut dx = vec![0.0; x.len()];
        for (k, g) in &jets {
            dx[*k] = g.eval(&p)? - x[*k];
        }
        Ok(dx)
    };
    let (_, states) = ode::rk4(field, &z0.values, horizon, step)?;
    Ok(Point::new(space.clone(), states.last().cloned().unwrap_or_else(|| z0.values.clone())))
}

/// Provenance of a constraint function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    PrimarySymbolic,
    SecondarySymbolic,
    NumericOnly,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: Expr,
    pub provenance: Provenance,
}

/// Defining functions of a constraint submanifold of one layer.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub layer: Layer,
    pub tol: f64,
    pub entries: Vec<Constraint>,
}

/// Membership tolerance, relative to the gradient norm of each function.
pub const MEMBERSHIP_TOL: f64 = 1e-7;

impl ConstraintSet {
    pub fn new(layer: Layer) -> Self {
        ConstraintSet { layer, tol: MEMBERSHIP_TOL, entries: Vec::new() }
    }

    pub fn with(mut self, exprs: impl IntoIterator<Item = Expr>, provenance: Provenance) -> Self {
        self.extend(exprs, provenance);
        self
    }

    pub fn extend(&mut self, exprs: impl IntoIterator<Item = Expr>, provenance: Provenance) {
        self.entries.extend(exprs.into_iter().map(|expr| Constraint { expr, provenance }));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn exprs(&self) -> Vec<Expr> {
        self.entries.iter().map(|c| c.expr.clone()).collect()
    }

    /// Check that every function only uses coordinates of the layer.
    pub fn validate(&self, chart: &BundleChart) -> Result<()> {
        let space = chart.layer(self.layer);
        for c in &self.entries {
            if let Some(bad) = c.expr.free_coords().into_iter().find(|x| !space.contains(*x)) {
                return Err(Error::LayerMismatch(format!("`{}` is not on the {:?} layer", chart.name(bad), self.layer)));
            }
        }
        Ok(())
    }

    /// Largest `|φ(pt)| / max(‖∇φ(pt)‖, 1e-12)` over the set; membership means
    /// this is at most `tol`.
    pub fn violation(&self, pt: &Point) -> Result<f64> {
        let coords = pt.space.coords().to_vec();
        let mut worst: f64 = 0.0;
        for c in &self.entries {
            let v = c.expr.eval(pt)?;
            if v == 0.0 {
                continue;
            }
            let g: f64 = c
                .expr
                .gradient(&coords)?
                .iter()
                .map(|d| d.eval(pt).map(|x| x * x))
                .sum::<Result<f64, _>>()?
                .sqrt();
            worst = worst.max(v.abs() / g.max(1e-12));
        }
        Ok(worst)
    }

    pub fn contains(&self, pt: &Point) -> Result<bool> {
        Ok(self.violation(pt)? <= self.tol)
    }
}

/// `max_{φ, μ} |h(∂/∂x^μ)(φ)(pt)|`, the failure of the horizontal subspace
/// at `pt` to be tangent to the constraint set. Coefficients are those at `pt`.
pub fn submanifold_tangency_defect(c: &ConnectionCoeffs<f64>, constraints: &ConstraintSet, pt: &Point) -> Result<f64> {
    let v = constraints.violation(pt)?;
    if v > constraints.tol {
        return Err(Error::PointOffConstraint(v));
    }
    let mut worst: f64 = 0.0;
    for phi in &constraints.entries {
        for mu in 0..c.chart.n {
            let mut d = 0.0;
            for (a, x) in &c.lift(mu).components {
                if phi.expr.depends_on(*a) {
                    d += x * phi.expr.diff(*a)?.eval(pt)?;
                }
            }
            worst = worst.max(d.abs());
        }
    }
    Ok(worst)
}

/// `‖Tπ ∘ A − Id‖_max` where `A(∂/∂x^μ) = h(∂/∂x^μ)` at `pt`, together with
/// the rank of the horizontal subspace.
pub fn right_inverse_defect(c: &ConnectionCoeffs<f64>) -> (f64, usize) {
    let coords = c.space().coords().to_vec();
    let n = c.chart.n;
    let mut a = DMatrix::zeros(coords.len(), n);
    for mu in 0..n {
        let lift = c.lift(mu);
        for (k, x) in coords.iter().enumerate() {
            a[(k, mu)] = lift.get(*x);
        }
    }
    let mut tpi = DMatrix::zeros(n, coords.len());
    for (k, x) in coords.iter().enumerate() {
        if x.is_base() {
            tpi[(x.mu as usize, k)] = 1.0;
        }
    }
    let defect = (&tpi * &a - DMatrix::identity(n, n)).amax();
    (defect, linalg::numerical_rank(&a, 1e-12))
}

/// Coefficient transport of a Hamiltonian connection to `Z`: `Γ^i_μ = Γ̃^i_μ`
/// and `Γ^j_{ρμ}` the minimum-norm solution of
/// `∂_μ p^ν_i + Γ^j_μ ∂_{y^j}p^ν_i + Γ^j_{ρμ} ∂_{z^j_ρ}p^ν_i = Γ̃^ν_{iμ}`,
/// with `p = Leg_L` differentiated at `z`.
pub fn transport_hamiltonian(
    th: &LagrangianTheory,
    tilde: &ConnectionCoeffs<f64>,
    z: &Point,
) -> Result<ConnectionCoeffs<f64>> {
    require_kind(tilde, ConnectionKind::HamiltonianZstar)?;
    let chart = th.chart.clone();
    let leg = legendre_map(th)?;
    let jets = chart.jets();
    let moms = chart.momenta();
    let mut out = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, chart.clone());
    for mu in 0..chart.n {
        for i in 0..chart.m {
            out.set(mu, CoordId::fiber(i), tilde.gamma(i, mu))?;
        }
    }
    let mut grads: HashMap<CoordId, HashMap<CoordId, f64>> = HashMap::new();
    for p in &moms {
        let mut g = HashMap::new();
        for c in chart.layer(Layer::Z).coords() {
            if leg[p].depends_on(*c) {
                g.insert(*c, leg[p].diff(*c)?.eval(z)?);
            }
        }
        grads.insert(*p, g);
    }
    let m = DMatrix::from_fn(moms.len(), jets.len(), |r, k| grads[&moms[r]].get(&jets[k]).copied().unwrap_or(0.0));
    for mu in 0..chart.n {
        let rhs = DVector::from_fn(moms.len(), |r, _| {
            let g = &grads[&moms[r]];
            let mut v = tilde.get(mu, moms[r]) - g.get(&CoordId::base(mu)).copied().unwrap_or(0.0);
            for j in 0..chart.m {
                v -= g.get(&CoordId::fiber(j)).copied().unwrap_or(0.0) * tilde.gamma(j, mu);
            }
            v
        });
        let sol = linalg::lstsq_min_norm(&m, &rhs, 1e-12);
        for (k, zc) in jets.iter().enumerate() {
            out.set(mu, *zc, sol.x[k])?;
        }
    }
    Ok(out)
}
