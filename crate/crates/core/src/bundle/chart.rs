use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{CoordId, CoordNamer, CoordSpace, SymbolTable};

/// The coordinate layers of a theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    /// Jet space `(x, y, z)`.
    Z,
    /// Extended multimomentum space `(x, y, p, p^μ_i)`.
    Lambda2,
    /// Reduced multimomentum space `(x, y, p^μ_i)`.
    ZStar,
    /// Whitney sum `(x, y, p, p^μ_i, z)`.
    W0,
}

/// Declaration of one fiber coordinate with the naming templates of its jet
/// and momentum coordinates; `{mu}` is replaced by each base label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberDecl {
    pub name: String,
    pub jet: String,
    pub momentum: String,
}

/// Coordinate universe of a theory with `n` base and `m` fiber coordinates.
#[derive(Debug, Clone)]
pub struct BundleChart {
    pub n: usize,
    pub m: usize,
    names: HashMap<CoordId, String>,
    by_name: HashMap<String, CoordId>,
    base_labels: Vec<String>,
    z: Arc<CoordSpace>,
    lambda2: Arc<CoordSpace>,
    zstar: Arc<CoordSpace>,
    w0: Arc<CoordSpace>,
}

impl BundleChart {
    /// One-based default names: `x[μ]`, `y[i]`, `z[i,μ]`, `p[i,μ]`, `p`.
    pub fn standard(n: usize, m: usize) -> Self {
        let labels: Vec<String> = (1..=n).map(|k| k.to_string()).collect();
        let base: Vec<String> = labels.iter().map(|l| format!("x[{l}]")).collect();
        let fibers = (1..=m)
            .map(|i| FiberDecl {
                name: format!("y[{i}]"),
                jet: format!("z[{i},{{mu}}]"),
                momentum: format!("p[{i},{{mu}}]"),
            })
            .collect();
        BundleChart::new(base, labels, fibers, "p").expect("standard names are unique")
    }

    pub fn new(base: Vec<String>, labels: Vec<String>, fibers: Vec<FiberDecl>, energy: &str) -> Result<Self> {
        let n = base.len();
        let m = fibers.len();
        if labels.len() != n {
            return Err(Error::Dimension(format!("{} base labels for {n} base coordinates", labels.len())));
        }
        if n == 0 {
            return Err(Error::Dimension("base dimension must be positive".into()));
        }
        let mut names = HashMap::new();
        let mut by_name = HashMap::new();
        let mut add = |c: CoordId, name: String| -> Result<()> {
            if by_name.insert(name.clone(), c).is_some() {
                return Err(Error::Dimension(format!("duplicate coordinate name `{name}`")));
            }
            names.insert(c, name);
            Ok(())
        };
        for (mu, name) in base.iter().enumerate() {
            add(CoordId::base(mu), name.clone())?;
        }
        for (i, f) in fibers.iter().enumerate() {
            add(CoordId::fiber(i), f.name.clone())?;
            for (mu, label) in labels.iter().enumerate() {
                add(CoordId::jet(i, mu), expand(&f.jet, label, n))?;
                add(CoordId::momentum(i, mu), expand(&f.momentum, label, n))?;
            }
        }
        add(CoordId::energy(), energy.to_string())?;
        let xs: Vec<CoordId> = (0..n).map(CoordId::base).collect();
        let ys: Vec<CoordId> = (0..m).map(CoordId::fiber).collect();
        let zs: Vec<CoordId> = (0..m).flat_map(|i| (0..n).map(move |mu| CoordId::jet(i, mu))).collect();
        let ps: Vec<CoordId> = (0..m).flat_map(|i| (0..n).map(move |mu| CoordId::momentum(i, mu))).collect();
        let cat = |parts: &[&[CoordId]]| Arc::new(CoordSpace::new(parts.concat()));
        let e = [CoordId::energy()];
        Ok(BundleChart {
            n,
            m,
            names,
            by_name,
            base_labels: labels,
            z: cat(&[&xs, &ys, &zs]),
            lambda2: cat(&[&xs, &ys, &e, &ps]),
            zstar: cat(&[&xs, &ys, &ps]),
            w0: cat(&[&xs, &ys, &e, &ps, &zs]),
        })
    }

    pub fn layer(&self, layer: Layer) -> &Arc<CoordSpace> {
        match layer {
            Layer::Z => &self.z,
            Layer::Lambda2 => &self.lambda2,
            Layer::ZStar => &self.zstar,
            Layer::W0 => &self.w0,
        }
    }

    pub fn name(&self, c: CoordId) -> String {
        self.names.get(&c).cloned().unwrap_or_else(|| format!("{c:?}"))
    }

    pub fn coord(&self, name: &str) -> Option<CoordId> {
        self.by_name.get(name).copied()
    }

    pub fn base_labels(&self) -> &[String] {
        &self.base_labels
    }

    pub fn base(&self) -> Vec<CoordId> {
        (0..self.n).map(CoordId::base).collect()
    }

    pub fn fibers(&self) -> Vec<CoordId> {
        (0..self.m).map(CoordId::fiber).collect()
    }

    /// Jet coordinates in `(i, μ)` order, `i` major.
    pub fn jets(&self) -> Vec<CoordId> {
        (0..self.m).flat_map(|i| (0..self.n).map(move |mu| CoordId::jet(i, mu))).collect()
    }

    pub fn momenta(&self) -> Vec<CoordId> {
        (0..self.m).flat_map(|i| (0..self.n).map(move |mu| CoordId::momentum(i, mu))).collect()
    }

    /// Does `c` index into this chart's ranges?
    pub fn owns(&self, c: CoordId) -> bool {
        self.names.contains_key(&c)
    }
}

fn expand(template: &str, label: &str, n: usize) -> String {
    if template.contains("{mu}") {
        template.replace("{mu}", label)
    } else if n == 1 {
        template.to_string()
    } else {
        format!("{template}[{label}]")
    }
}

impl SymbolTable for BundleChart {
    fn resolve(&self, name: &str) -> Option<CoordId> {
        self.coord(name)
    }

    fn names(&self) -> Vec<String> {
        self.by_name.keys().cloned().collect()
    }
}

impl CoordNamer for BundleChart {
    fn name(&self, c: CoordId) -> String {
        BundleChart::name(self, c)
    }
}
