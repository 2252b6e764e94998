use rand::Rng;

use super::{CoordId, Expr, Prim};

/// Generator of random expression trees for property tests.
#[derive(Debug, Clone)]
pub struct RandomExpr {
    pub coords: Vec<CoordId>,
    pub max_depth: usize,
    /// Allow `sin`, `cos`, `exp` nodes.
    pub transcendental: bool,
    /// Allow `Inv` and `Sqrt` (guarded so that they stay defined).
    pub rational: bool,
}

impl RandomExpr {
    pub fn new(coords: Vec<CoordId>) -> Self {
        RandomExpr { coords, max_depth: 3, transcendental: true, rational: true }
    }

    pub fn polynomial(coords: Vec<CoordId>, max_depth: usize) -> Self {
        RandomExpr { coords, max_depth, transcendental: false, rational: false }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        self.gen(rng, self.max_depth)
    }

    fn leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        if self.coords.is_empty() || rng.gen_bool(0.25) {
            let v: f64 = rng.gen_range(-3.0..3.0);
            Expr::constant((v * 4.0).round() / 4.0 + 0.5)
        } else {
            Expr::coord(self.coords[rng.gen_range(0..self.coords.len())])
        }
    }

    fn gen<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize) -> Expr {
        if depth == 0 || rng.gen_bool(0.2) {
            return self.leaf(rng);
        }
        let d = depth - 1;
        let kinds = if self.transcendental { 8 } else { 4 };
        let kinds = if self.rational { kinds + 2 } else { kinds };
        let mut k = rng.gen_range(0..kinds);
        if !self.transcendental && k >= 4 {
            k += 4;
        }
        match k {
            0 | 1 => Expr::sum([self.gen(rng, d), self.gen(rng, d)]),
            2 => Expr::product([self.gen(rng, d), self.gen(rng, d)]),
            3 => self.gen(rng, d).powi(rng.gen_range(2..=3)),
            4 => Expr::apply(Prim::Sin, self.gen(rng, d)),
            5 => Expr::apply(Prim::Cos, self.gen(rng, d)),
            6 => Expr::apply(Prim::Exp, self.gen(rng, d).scale(0.3)),
            7 => self.gen(rng, d).neg(),
            // 1 + u² never vanishes, so these stay defined everywhere
            8 => (self.gen(rng, d).powi(2) + 1.0).inv(),
            _ => (self.gen(rng, d).powi(2) + 1.0).sqrt(),
        }
    }
}
