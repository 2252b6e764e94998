use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CoordId, Expr};
use crate::error::ExprError;

/// Settings for randomized equality testing.
#[derive(Debug, Clone)]
pub struct EquivOptions {
    pub trials: usize,
    pub tol: f64,
    /// Default sampling interval for every coordinate.
    pub range: (f64, f64),
    /// Per-coordinate overrides of `range`.
    pub boxes: HashMap<CoordId, (f64, f64)>,
    pub seed: u64,
    pub max_resamples: usize,
}

impl Default for EquivOptions {
    fn default() -> Self {
        EquivOptions {
            trials: 20,
            tol: 1e-9,
            range: (-2.0, 2.0),
            boxes: HashMap::new(),
            seed: 0x5eed,
            max_resamples: 10,
        }
    }
}

impl EquivOptions {
    pub fn trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_box(mut self, c: CoordId, lo: f64, hi: f64) -> Self {
        self.boxes.insert(c, (lo, hi));
        self
    }
}

/// Largest discrepancy seen while comparing two expressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivOutcome {
    pub equal: bool,
    pub max_scaled_error: f64,
}

/// Decide `a ≡ b` by evaluation at random points.
///
/// A trial passes when `|a − b| ≤ tol·(1 + max(|a|, |b|))`. Points where
/// either side raises a domain error are redrawn.
pub fn equiv_probabilistic(a: &Expr, b: &Expr, opts: &EquivOptions) -> Result<bool, ExprError> {
    equiv_detailed(a, b, opts).map(|o| o.equal)
}

pub fn equiv_detailed(a: &Expr, b: &Expr, opts: &EquivOptions) -> Result<EquivOutcome, ExprError> {
    assert!(opts.trials >= 1, "at least one trial is required");
    let mut coords: BTreeSet<CoordId> = a.free_coords();
    coords.extend(b.free_coords());
    let coords: Vec<CoordId> = coords.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst: f64 = 0.0;
    let mut equal = true;
    for _ in 0..opts.trials {
        let mut done = false;
        for _ in 0..opts.max_resamples.max(1) {
            let pt: HashMap<CoordId, f64> = coords
                .iter()
                .map(|c| {
                    let (lo, hi) = opts.boxes.get(c).copied().unwrap_or(opts.range);
                    (*c, rng.gen_range(lo..=hi))
                })
                .collect();
            let (va, vb) = match (a.eval(&pt), b.eval(&pt)) {
                (Ok(va), Ok(vb)) if va.is_finite() && vb.is_finite() => (va, vb),
                (Err(e @ ExprError::MissingCoordinate(_)), _) | (_, Err(e @ ExprError::MissingCoordinate(_))) => {
                    return Err(e)
                }
                _ => continue,
            };
            let scaled = (va - vb).abs() / (1.0 + va.abs().max(vb.abs()));
            worst = worst.max(scaled);
            if scaled > opts.tol {
                equal = false;
            }
            done = true;
            break;
        }
        if !done {
            return Err(ExprError::Inconclusive);
        }
    }
    Ok(EquivOutcome { equal, max_scaled_error: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_square() {
        let x = Expr::coord(CoordId::base(0));
        let a = (x.clone() + 1.0).powi(2);
        let b = x.powi(2) + x.scale(2.0) + 1.0;
        assert!(equiv_probabilistic(&a, &b, &EquivOptions::default()).unwrap());
    }

    #[test]
    fn small_offset_detected() {
        let x = Expr::coord(CoordId::base(0));
        let b = x.clone() + 1e-3;
        assert!(!equiv_probabilistic(&x, &b, &EquivOptions::default().tol(1e-9)).unwrap());
    }

    #[test]
    fn always_undefined_is_inconclusive() {
        let x = Expr::coord(CoordId::base(0));
        let bad = (x.powi(2) + 1.0).neg().sqrt();
        assert_eq!(
            equiv_probabilistic(&bad, &bad, &EquivOptions::default()).unwrap_err(),
            ExprError::Inconclusive
        );
    }
}
