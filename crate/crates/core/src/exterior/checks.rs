//! Randomized identity suites for the exterior algebra. Shared by the test
//! suite and the `check-exterior` command.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::form::Form;
use super::tensor::{contract_vector, Projector, VectorField};
use crate::error::Result;
use crate::expr::{equiv_probabilistic, CoordId, CoordSpace, EquivOptions, Expr, RandomExpr};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Coefficientwise `a ≡ b` under randomized evaluation.
pub fn forms_equiv(a: &Form<Expr>, b: &Form<Expr>, opts: &EquivOptions) -> Result<bool> {
    if a.degree() != b.degree() {
        return Ok(false);
    }
    let mut keys: BTreeSet<Vec<CoordId>> = a.terms().map(|(k, _)| k.to_vec()).collect();
    keys.extend(b.terms().map(|(k, _)| k.to_vec()));
    for k in keys {
        if !equiv_probabilistic(&a.coeff(&k), &b.coeff(&k), opts)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A random chart: `n` base, `m` fiber and `nm` jet coordinates.
pub fn random_chart<R: Rng>(rng: &mut R) -> Vec<CoordId> {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=2);
    let mut coords: Vec<CoordId> = (0..n).map(CoordId::base).collect();
    coords.extend((0..m).map(CoordId::fiber));
    for i in 0..m {
        for mu in 0..n {
            coords.push(CoordId::jet(i, mu));
        }
    }
    coords
}

pub fn random_form<R: Rng>(rng: &mut R, coords: &[CoordId], degree: usize, terms: usize) -> Form<Expr> {
    let gen = RandomExpr::new(coords.to_vec());
    let mut f = Form::zero(degree);
    if degree > coords.len() {
        return f;
    }
    for _ in 0..terms {
        let key: Vec<CoordId> = coords.choose_multiple(rng, degree).copied().collect();
        f.add_term(&key, gen.sample(rng));
    }
    f
}

fn random_numeric_form<R: Rng>(rng: &mut R, coords: &[CoordId], degree: usize) -> Form<f64> {
    let mut f = Form::zero(degree);
    if rng.gen_bool(0.3) {
        // decomposable: wedge of random 1-forms
        let mut acc = Form::scalar(1.0);
        for _ in 0..degree {
            let mut one = Form::zero(1);
            for c in coords {
                one.add_term(&[*c], rng.gen_range(-1.0..1.0));
            }
            acc = acc.wedge(&one);
        }
        return acc;
    }
    for _ in 0..rng.gen_range(1..=6) {
        let key: Vec<CoordId> = coords.choose_multiple(rng, degree).copied().collect();
        f.add_term(&key, rng.gen_range(-2.0..2.0));
    }
    f
}

fn sign(p: usize) -> f64 {
    if p % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn opts(seed: u64) -> EquivOptions {
    EquivOptions::default().trials(8).tol(1e-8).seed(seed)
}

/// `d(dα) ≡ 0` for random forms of degree 0..2.
pub fn check_d_squared(trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for t in 0..trials {
        let coords = random_chart(&mut rng);
        let deg = t % 3;
        let a = random_form(&mut rng, &coords, deg, 3);
        let dd = a.exterior_d()?.exterior_d()?;
        if !forms_equiv(&dd, &Form::zero(deg + 2), &opts(seed ^ t as u64))? {
            failures += 1;
        }
    }
    Ok(SuiteOutcome { name: "d_squared".into(), trials, failures })
}

/// `a ∧ b = (−1)^{pq} b ∧ a`.
pub fn check_graded_commutativity(trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for t in 0..trials {
        let coords = random_chart(&mut rng);
        let (p, q) = (rng.gen_range(0..=2), rng.gen_range(0..=2));
        let a = random_form(&mut rng, &coords, p, 3);
        let b = random_form(&mut rng, &coords, q, 3);
        let lhs = a.wedge(&b);
        let rhs = b.wedge(&a).scale(&Expr::constant(sign(p * q)));
        if !forms_equiv(&lhs, &rhs, &opts(seed ^ t as u64))? {
            failures += 1;
        }
    }
    Ok(SuiteOutcome { name: "graded_commutativity".into(), trials, failures })
}

/// `d(a ∧ b) = da ∧ b + (−1)^p a ∧ db`.
pub fn check_leibniz(trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for t in 0..trials {
        let coords = random_chart(&mut rng);
        let (p, q) = (rng.gen_range(0..=2), rng.gen_range(0..=1));
        let a = random_form(&mut rng, &coords, p, 2);
        let b = random_form(&mut rng, &coords, q, 2);
        let lhs = a.wedge(&b).exterior_d()?;
        let rhs = a
            .exterior_d()?
            .wedge(&b)
            .add(&a.wedge(&b.exterior_d()?).scale(&Expr::constant(sign(p))));
        if !forms_equiv(&lhs, &rhs, &opts(seed ^ t as u64))? {
            failures += 1;
        }
    }
    Ok(SuiteOutcome { name: "leibniz".into(), trials, failures })
}

fn random_vector<R: Rng>(rng: &mut R, coords: &[CoordId]) -> VectorField<f64> {
    let mut v = VectorField::zero();
    for c in coords {
        v.set(*c, rng.gen_range(-1.0..1.0));
    }
    v
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

/// `contract_projector` against the slot-by-slot definition
/// `(i_h a)(v₁…v_k) = Σ_j a(v₁, …, h v_j, …, v_k)`, for arbitrary (1,1) tensors.
pub fn check_contract_projector(trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..trials {
        let coords = random_chart(&mut rng);
        let deg = rng.gen_range(1..=3.min(coords.len()));
        let a = random_numeric_form(&mut rng, &coords, deg);
        let space = Arc::new(CoordSpace::new(coords.clone()));
        let mut h = Projector::zero(space);
        for r in &coords {
            for c in &coords {
                if rng.gen_bool(0.6) {
                    h.entries.insert((*r, *c), rng.gen_range(-1.0..1.0));
                }
            }
        }
        let ih = h.contract(&a)?;
        let vs: Vec<VectorField<f64>> = (0..deg).map(|_| random_vector(&mut rng, &coords)).collect();
        let lhs = eval_on(&ih, &vs);
        let mut rhs = 0.0;
        for j in 0..deg {
            let mut slots = vs.clone();
            slots[j] = h.apply(&vs[j]);
            rhs += eval_on(&a, &slots);
        }
        if !close(lhs, rhs) {
            failures += 1;
        }
    }
    Ok(SuiteOutcome { name: "contract_projector".into(), trials, failures })
}

/// `i_ξ(η ∧ Ω) = i_ξη ∧ Ω − η ∧ i_ξΩ` for 1-forms η and 2-forms Ω, with both
/// sides checked against direct multilinear evaluation.
pub fn check_contract_vector(trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..trials {
        let mut coords = random_chart(&mut rng);
        if coords.len() < 3 {
            coords.push(CoordId::energy());
        }
        let eta = random_numeric_form(&mut rng, &coords, 1);
        let om = random_numeric_form(&mut rng, &coords, 2);
        let xi = random_vector(&mut rng, &coords);
        let lhs = contract_vector(&eta.wedge(&om), &xi);
        let rhs = contract_vector(&eta, &xi).wedge(&om).sub(&eta.wedge(&contract_vector(&om, &xi)));
        let v1 = random_vector(&mut rng, &coords);
        let v2 = random_vector(&mut rng, &coords);
        let direct = eval_on(&eta.wedge(&om), &[xi.clone(), v1.clone(), v2.clone()]);
        let a = eval_on(&lhs, &[v1.clone(), v2.clone()]);
        let b = eval_on(&rhs, &[v1, v2]);
        if !(close(a, direct) && close(b, direct)) {
            failures += 1;
        }
    }
    Ok(SuiteOutcome { name: "contract_vector_leibniz".into(), trials, failures })
}

fn eval_on(f: &Form<f64>, vs: &[VectorField<f64>]) -> f64 {
    let closures: Vec<Box<dyn Fn(CoordId) -> f64 + '_>> =
        vs.iter().map(|v| Box::new(move |c: CoordId| v.get(c)) as Box<dyn Fn(CoordId) -> f64>).collect();
    let refs: Vec<&dyn Fn(CoordId) -> f64> = closures.iter().map(|b| b.as_ref()).collect();
    f.evaluate_on(&refs)
}

pub fn run_all(trials: usize, seed: u64) -> Result<Vec<SuiteOutcome>> {
    Ok(vec![
        check_d_squared(trials, seed)?,
        check_graded_commutativity(trials, seed.wrapping_add(1))?,
        check_leibniz(trials, seed.wrapping_add(2))?,
        check_contract_projector(trials, seed.wrapping_add(3))?,
        check_contract_vector(trials, seed.wrapping_add(4))?,
    ])
}
