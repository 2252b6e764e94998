//! Random quadratic theories `L = ½ zᵀAz + zᵀBy + ½ yᵀCy + eᵀz`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::chart::BundleChart;
use super::theory::{HamiltonianData, LagrangianTheory};
use crate::error::Result;
use crate::expr::{CoordId, Expr};

#[derive(Debug, Clone)]
pub struct QuadraticTheory {
    pub n: usize,
    pub m: usize,
    /// Symmetric `nm × nm` velocity Hessian, jet order.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DVector<f64>,
}

fn random_orthogonal<R: Rng>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    g.qr().q()
}

impl QuadraticTheory {
    /// `A = P D Pᵀ` with eigenvalues of magnitude in `[0.5, 2]` and random
    /// signs; when `singular`, between one and `nm − 1` eigenvalues are zeroed
    /// (all of them when `nm = 1`).
    pub fn random<R: Rng>(rng: &mut R, n: usize, m: usize, singular: bool) -> Self {
        let k = n * m;
        let p = random_orthogonal(rng, k);
        let mut d: Vec<f64> = (0..k)
            .map(|_| {
                let mag = rng.gen_range(0.5..2.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        if singular {
            let zeros = if k == 1 { 1 } else { rng.gen_range(1..k) };
            for v in d.iter_mut().take(zeros) {
                *v = 0.0;
            }
        }
        let a = &p * DMatrix::from_diagonal(&DVector::from_vec(d)) * p.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let b = DMatrix::from_fn(k, m, |_, _| rng.gen_range(-1.0..1.0));
        let c0 = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let c = (&c0 + c0.transpose()) * 0.5;
        let e = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
        QuadraticTheory { n, m, a, b, c, e }
    }

    pub fn chart(&self) -> Arc<BundleChart> {
        Arc::new(BundleChart::standard(self.n, self.m))
    }

    fn z(&self) -> Vec<Expr> {
        (0..self.m).flat_map(|i| (0..self.n).map(move |mu| Expr::coord(CoordId::jet(i, mu)))).collect()
    }

    fn y(&self) -> Vec<Expr> {
        (0..self.m).map(|i| Expr::coord(CoordId::fiber(i))).collect()
    }

    pub fn lagrangian(&self) -> Expr {
        let z = self.z();
        let y = self.y();
        let mut terms = Vec::new();
        for (r, zr) in z.iter().enumerate() {
            for (s, zs) in z.iter().enumerate() {
                terms.push(zr * zs * (0.5 * self.a[(r, s)]));
            }
            for (s, ys) in y.iter().enumerate() {
                terms.push(zr * ys * self.b[(r, s)]);
            }
            terms.push(zr.clone() * self.e[r]);
        }
        for (r, yr) in y.iter().enumerate() {
            for (s, ys) in y.iter().enumerate() {
                terms.push(yr * ys * (0.5 * self.c[(r, s)]));
            }
        }
        Expr::sum(terms)
    }

    /// `H = ½ (p − By − e)ᵀ A⁻¹ (p − By − e) − ½ yᵀCy`, when `A` is invertible.
    pub fn hamiltonian(&self, chart: Arc<BundleChart>) -> Result<Option<HamiltonianData>> {
        let Some(ainv) = self.a.clone().try_inverse() else { return Ok(None) };
        let y = self.y();
        let w: Vec<Expr> = (0..self.n * self.m)
            .map(|r| {
                let (i, mu) = (r / self.n, r % self.n);
                let mut t = vec![Expr::coord(CoordId::momentum(i, mu)), Expr::constant(-self.e[r])];
                for (s, ys) in y.iter().enumerate() {
                    t.push(ys.clone() * -self.b[(r, s)]);
                }
                Expr::sum(t)
            })
            .collect();
        let mut terms = Vec::new();
        for (r, wr) in w.iter().enumerate() {
            for (s, ws) in w.iter().enumerate() {
                terms.push(wr * ws * (0.5 * ainv[(r, s)]));
            }
        }
        for (r, yr) in y.iter().enumerate() {
            for (s, ys) in y.iter().enumerate() {
                terms.push(yr * ys * (-0.5 * self.c[(r, s)]));
            }
        }
        Ok(Some(HamiltonianData::new(chart, Expr::sum(terms), Vec::new())?))
    }

    pub fn theory(&self, name: &str) -> Result<LagrangianTheory> {
        let chart = self.chart();
        let mut th = LagrangianTheory::new(name, chart.clone(), self.lagrangian())?;
        if let Some(hd) = self.hamiltonian(chart)? {
            th = th.with_hamiltonian(hd).with_cokernel(Vec::new());
        }
        Ok(th)
    }

    pub fn is_regular(&self) -> bool {
        crate::linalg::numerical_rank(&self.a, 1e-10) == self.n * self.m
    }
}
