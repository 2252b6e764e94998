//! Sampled sections on regular grids and the field-equation residuals
//! evaluated along them.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::canonical::{dl_dz, poincare_cartan};
use super::chart::{BundleChart, Layer};
use super::theory::{HamiltonianData, LagrangianTheory};
use crate::error::{Error, Result};
use crate::exterior::{pullback, Form};
use crate::expr::{CoordId, Expr, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub shape: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major multi-index of a flat index.
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for d in (0..self.shape.len()).rev() {
            idx[d] = k % self.shape[d];
            k /= self.shape[d];
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn position(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .enumerate()
            .map(|(d, i)| self.origin[d] + *i as f64 * self.spacing[d])
            .collect()
    }

    /// Second-order finite-difference derivative along axis `d`: central in
    /// the interior, one-sided three-point stencils at the ends.
    pub fn derivative(&self, values: &[f64], d: usize) -> Result<Vec<f64>> {
        if self.shape.iter().any(|n| *n < 3) {
            return Err(Error::GridTooCoarse);
        }
        let h = self.spacing[d];
        let n = self.shape[d];
        let mut out = vec![0.0; values.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let idx = self.multi_index(k);
            let at = |off: isize| {
                let mut j = idx.clone();
                j[d] = (idx[d] as isize + off) as usize;
                values[self.flat(&j)]
            };
            *o = if idx[d] == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if idx[d] == n - 1 {
                (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
            } else {
                (at(1) - at(-1)) / (2.0 * h)
            };
        }
        Ok(out)
    }
}

/// A section sampled on a regular grid. Values are keyed by coordinate
/// name and stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSample {
    pub grid: Grid,
    pub values: BTreeMap<String, Vec<f64>>,
}

impl SectionSample {
    pub fn new(grid: Grid) -> Self {
        SectionSample { grid, values: BTreeMap::new() }
    }

    /// Sample `f(x)` for the named coordinate.
    pub fn fill(&mut self, name: &str, f: impl Fn(&[f64]) -> f64) {
        let v = (0..self.grid.len()).map(|k| f(&self.grid.position(k))).collect();
        self.values.insert(name.to_string(), v);
    }

    fn get(&self, chart: &BundleChart, c: CoordId) -> Option<&Vec<f64>> {
        self.values.get(&chart.name(c))
    }

    fn require(&self, chart: &BundleChart, c: CoordId) -> Result<&Vec<f64>> {
        self.get(chart, c)
            .ok_or_else(|| Error::InvalidArgument(format!("section lacks values for `{}`", chart.name(c))))
    }

    /// Values of every coordinate of `layer` at each grid point; base
    /// coordinates come from the grid and missing jets from differences.
    fn points(&self, chart: &BundleChart, layer: Layer) -> Result<Vec<Point>> {
        let space = chart.layer(layer).clone();
        let mut columns: HashMap<CoordId, Vec<f64>> = HashMap::new();
        for c in space.coords() {
            let col = match c.space {
                crate::expr::Space::Base => {
                    (0..self.grid.len()).map(|k| self.grid.position(k)[c.mu as usize]).collect()
                }
                crate::expr::Space::Jet if self.get(chart, *c).is_none() => {
                    let y = self.require(chart, CoordId::fiber(c.i as usize))?;
                    self.grid.derivative(y, c.mu as usize)?
                }
                _ => self.require(chart, *c)?.clone(),
            };
            columns.insert(*c, col);
        }
        Ok((0..self.grid.len())
            .map(|k| Point::new(space.clone(), space.coords().iter().map(|c| columns[c][k]).collect()))
            .collect())
    }
}

/// `∂L/∂y^i − d/dx^μ (∂L/∂z^i_μ)` along the section; one row per grid point,
/// one entry per fiber index.
pub fn euler_lagrange_residual(th: &LagrangianTheory, s: &SectionSample) -> Result<Vec<Vec<f64>>> {
    let chart = &th.chart;
    if s.grid.shape.len() != th.n() {
        return Err(Error::DimensionMismatch("grid rank must equal the base dimension".into()));
    }
    let pts = s.points(chart, Layer::Z)?;
    let dz = dl_dz(th)?;
    let dy = th.lagrangian.gradient(&chart.fibers())?;
    let mut out = vec![vec![0.0; th.m()]; pts.len()];
    for i in 0..th.m() {
        for (k, pt) in pts.iter().enumerate() {
            out[k][i] = dy[i].eval(pt)?;
        }
        for mu in 0..th.n() {
            let flux: Vec<f64> =
                pts.iter().map(|pt| dz[i * th.n() + mu].eval(pt)).collect::<Result<_, _>>()?;
            let div = s.grid.derivative(&flux, mu)?;
            for k in 0..pts.len() {
                out[k][i] -= div[k];
            }
        }
    }
    Ok(out)
}

/// Hamilton's equations along a section of `Z*`: first the `nm` entries
/// `∂_μ y^i − ∂H/∂p^μ_i`, then the `m` entries `∂_μ p^μ_i + ∂H/∂y^i`.
pub fn hamilton_residual(hd: &HamiltonianData, s: &SectionSample) -> Result<Vec<Vec<f64>>> {
    let chart = &hd.chart;
    let (n, m) = (chart.n, chart.m);
    let pts = s.points(chart, Layer::ZStar)?;
    let hp = hd.h.gradient(&chart.momenta())?;
    let hy = hd.h.gradient(&chart.fibers())?;
    let mut out = vec![vec![0.0; n * m + m]; pts.len()];
    for i in 0..m {
        let y = s.require(chart, CoordId::fiber(i))?;
        for mu in 0..n {
            let dy = s.grid.derivative(y, mu)?;
            let p = s.require(chart, CoordId::momentum(i, mu))?;
            let dp = s.grid.derivative(p, mu)?;
            for (k, pt) in pts.iter().enumerate() {
                out[k][i * n + mu] = dy[k] - hp[i * n + mu].eval(pt)?;
                out[k][n * m + i] += dp[k];
            }
        }
        for (k, pt) in pts.iter().enumerate() {
            out[k][n * m + i] += hy[i].eval(pt)?;
        }
    }
    Ok(out)
}

/// `max_ξ |ψ^*(i_ξ Ω_L)|` over coordinate fields ξ, per grid point, for a
/// section `ψ` of `Z` (jets must be supplied explicitly or are differenced).
pub fn de_donder_residual(th: &LagrangianTheory, s: &SectionSample) -> Result<Vec<f64>> {
    let chart = &th.chart;
    let (_, omega) = poincare_cartan(th)?;
    let pts = s.points(chart, Layer::Z)?;
    let space = chart.layer(Layer::Z).clone();
    let non_base: Vec<CoordId> = space.coords().iter().copied().filter(|c| !c.is_base()).collect();
    let mut derivs: HashMap<(CoordId, usize), Vec<f64>> = HashMap::new();
    for c in &non_base {
        let col: Vec<f64> = pts.iter().map(|p| p.get(*c).unwrap()).collect();
        for mu in 0..th.n() {
            derivs.insert((*c, mu), s.grid.derivative(&col, mu)?);
        }
    }
    let base: Vec<CoordId> = chart.base();
    let mut out = Vec::with_capacity(pts.len());
    for (k, pt) in pts.iter().enumerate() {
        let om = omega.eval(pt)?;
        let mut images = BTreeMap::new();
        for c in &non_base {
            let mut img = Form::zero(1);
            for mu in 0..th.n() {
                img.add_term(&[CoordId::base(mu)], derivs[&(*c, mu)][k]);
            }
            images.insert(*c, img);
        }
        let mut worst: f64 = 0.0;
        for a in space.coords() {
            let ia = om.contract_coord(*a);
            let pulled = pullback(&ia, &images, |v| *v);
            worst = worst.max(pulled.coeff(&base).abs());
        }
        out.push(worst);
    }
    Ok(out)
}

/// Fill jet values of a section from its field values by differences.
pub fn prolong(chart: &BundleChart, s: &SectionSample) -> Result<SectionSample> {
    let mut out = s.clone();
    for i in 0..chart.m {
        let y = s.require(chart, CoordId::fiber(i))?.clone();
        for mu in 0..chart.n {
            let d = s.grid.derivative(&y, mu)?;
            out.values.insert(chart.name(CoordId::jet(i, mu)), d);
        }
    }
    Ok(out)
}

/// Evaluate `e` along the section at every grid point.
pub fn along(chart: &BundleChart, layer: Layer, s: &SectionSample, e: &Expr) -> Result<Vec<f64>> {
    s.points(chart, layer)?.iter().map(|p| e.eval(p).map_err(Error::from)).collect()
}
