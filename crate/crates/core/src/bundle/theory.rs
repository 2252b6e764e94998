use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chart::{BundleChart, Layer};
use crate::error::{Error, Result};
use crate::expr::{CoordId, Expr, Space};

/// The four field-equation pictures the engine runs constraint chains in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formalism {
    /// Jet space `Z` with `Ω_L`.
    Lagrangian,
    /// Primary constraint set of `Z*` with the restricted `Ω_h`.
    Hamiltonian,
    /// `W₀` with `Ω_{H₀}`; chain `W̄_r`.
    Unified,
    /// `W̄₁` with the restricted `Ω_{H₀}`; chain `Ŵ_r`.
    UnifiedRestricted,
}

impl Formalism {
    pub const ALL: [Formalism; 4] =
        [Formalism::Lagrangian, Formalism::Hamiltonian, Formalism::Unified, Formalism::UnifiedRestricted];

    pub fn layer(self) -> Layer {
        match self {
            Formalism::Lagrangian => Layer::Z,
            Formalism::Hamiltonian => Layer::ZStar,
            Formalism::Unified | Formalism::UnifiedRestricted => Layer::W0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Formalism::Lagrangian => "lagrangian",
            Formalism::Hamiltonian => "hamiltonian",
            Formalism::Unified => "unified",
            Formalism::UnifiedRestricted => "unified_restricted",
        }
    }
}

/// A covector over fiber indices, `κ = Σ_i κ_i e^i`, with coefficients that
/// may depend on the point.
pub type FiberCovector = BTreeMap<usize, Expr>;

/// Local Hamiltonian data on `Z*`: the function `H` (with `p = −H`) and the
/// primary constraints cutting out its domain.
#[derive(Debug, Clone)]
pub struct HamiltonianData {
    pub chart: Arc<BundleChart>,
    pub h: Expr,
    pub constraints: Vec<Expr>,
}

impl HamiltonianData {
    pub fn new(chart: Arc<BundleChart>, h: Expr, constraints: Vec<Expr>) -> Result<Self> {
        check_layer(&chart, &h, Layer::ZStar)?;
        for c in &constraints {
            check_layer(&chart, c, Layer::ZStar)?;
        }
        Ok(HamiltonianData { chart, h, constraints })
    }
}

/// A first-order Lagrangian field theory on a trivial bundle.
#[derive(Debug, Clone)]
pub struct LagrangianTheory {
    pub name: String,
    pub chart: Arc<BundleChart>,
    pub lagrangian: Expr,
    /// Basis of the Hessian cokernel, when registered.
    pub cokernel: Option<Vec<FiberCovector>>,
    pub hamiltonian: Option<HamiltonianData>,
    /// Symbolic constraints per formalism; entry `k` lists the functions
    /// added at step `k + 2`.
    pub registered: BTreeMap<Formalism, Vec<Vec<Expr>>>,
    pub sample_box: HashMap<CoordId, (f64, f64)>,
    pub default_range: (f64, f64),
}

impl LagrangianTheory {
    pub fn new(name: impl Into<String>, chart: Arc<BundleChart>, lagrangian: Expr) -> Result<Self> {
        check_layer(&chart, &lagrangian, Layer::Z)?;
        Ok(LagrangianTheory {
            name: name.into(),
            chart,
            lagrangian,
            cokernel: None,
            hamiltonian: None,
            registered: BTreeMap::new(),
            sample_box: HashMap::new(),
            default_range: (-2.0, 2.0),
        })
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn m(&self) -> usize {
        self.chart.m
    }

    pub fn with_hamiltonian(mut self, hd: HamiltonianData) -> Self {
        self.hamiltonian = Some(hd);
        self
    }

    pub fn with_cokernel(mut self, basis: Vec<FiberCovector>) -> Self {
        self.cokernel = Some(basis);
        self
    }

    pub fn range_of(&self, c: CoordId) -> (f64, f64) {
        self.sample_box.get(&c).copied().unwrap_or(self.default_range)
    }

    pub fn hamiltonian(&self) -> Result<&HamiltonianData> {
        self.hamiltonian
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("theory `{}` has no Hamiltonian", self.name)))
    }
}

pub(crate) fn check_layer(chart: &BundleChart, e: &Expr, layer: Layer) -> Result<()> {
    let space = chart.layer(layer);
    for c in e.free_coords() {
        if !space.contains(c) || c.space == Space::Frame {
            return Err(Error::LayerMismatch(format!(
                "`{}` is not a coordinate of the {layer:?} layer",
                chart.name(c)
            )));
        }
    }
    Ok(())
}
