use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::problem::{Prepared, Problem};
use crate::expr::Point;
use crate::linalg;

/// How points on a constraint set are drawn: uniform in the theory's
/// sampling box, then Gauss–Newton onto the set.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub samples: usize,
    pub seed: u64,
    pub gn_tol: f64,
    pub gn_max_iter: usize,
    /// Give up after `attempts_factor × samples` candidates.
    pub attempts_factor: usize,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler { samples: 256, seed: 0, gn_tol: 1e-10, gn_max_iter: 50, attempts_factor: 20 }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Sampler {
    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Candidate `j` of stream `stream`; deterministic in `(seed, stream, j)`.
    pub fn candidate(&self, problem: &Problem, stream: u64, j: u64) -> Point {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed ^ mix(stream ^ mix(j))));
        let values = problem
            .space
            .coords()
            .iter()
            .map(|c| {
                let (lo, hi) = problem.theory.range_of(*c);
                rng.gen_range(lo..hi)
            })
            .collect();
        Point::new(problem.space.clone(), values)
    }

    /// Gauss–Newton on the non-base coordinates; `None` if it does not
    /// converge or leaves the domain of `Ω`.
    pub fn project(&self, problem: &Problem, set: &Prepared, mut x: Point) -> Option<Point> {
        let movable: Vec<usize> =
            problem.space.coords().iter().enumerate().filter(|(_, c)| !c.is_base()).map(|(k, _)| k).collect();
        let mut converged = set.is_empty();
        for _ in 0..self.gn_max_iter {
            if converged {
                break;
            }
            let c = set.values_at(&x).ok()?;
            if c.iter().any(|v| !v.is_finite()) {
                return None;
            }
            if c.iter().all(|v| v.abs() <= self.gn_tol) {
                converged = true;
                break;
            }
            let j = set.jacobian_at(&x).ok()?;
            let jm = j.select_columns(movable.iter());
            let step = linalg::lstsq_min_norm(&jm, &DVector::from_vec(c), 1e-12).x;
            for (s, k) in step.iter().zip(&movable) {
                x.values[*k] -= s;
            }
        }
        if !converged {
            let c = set.values_at(&x).ok()?;
            converged = c.iter().all(|v| v.abs() <= self.gn_tol);
        }
        if !converged || x.values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        problem.omega.eval(&x).ok()?;
        Some(x)
    }

    /// Up to `samples` points on `set` (frame included by the caller).
    /// Candidates are processed in parallel batches and kept in order, so the
    /// result only depends on the seed and `stream`.
    pub fn sample(&self, problem: &Problem, set: &Prepared, stream: u64) -> Vec<Point> {
        let max = (self.samples * self.attempts_factor) as u64;
        let mut out = Vec::with_capacity(self.samples);
        let mut next = 0u64;
        while out.len() < self.samples && next < max {
            let batch = ((self.samples - out.len()) as u64 * 2).max(8).min(max - next);
            let found: Vec<Option<Point>> = (next..next + batch)
                .into_par_iter()
                .map(|j| self.project(problem, set, self.candidate(problem, stream, j)))
                .collect();
            next += batch;
            out.extend(found.into_iter().flatten().take(self.samples - out.len()));
        }
        out
    }
}
