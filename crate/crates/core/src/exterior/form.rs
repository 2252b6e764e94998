use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use smallvec::SmallVec;

use crate::error::ExprError;
use crate::expr::{CoordId, Expr, Lookup};

/// Scalars a form can carry: exact expressions or evaluated numbers.
pub trait Coefficient: Clone + Debug + Send + Sync {
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
}

impl Coefficient for Expr {
    fn zero() -> Self {
        Expr::zero()
    }
    fn from_f64(v: f64) -> Self {
        Expr::constant(v)
    }
    fn is_zero(&self) -> bool {
        Expr::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        Expr::sum([self.clone(), other.clone()])
    }
    fn mul(&self, other: &Self) -> Self {
        Expr::product([self.clone(), other.clone()])
    }
    fn neg(&self) -> Self {
        Expr::neg(self)
    }
}

/// Strictly increasing tuple of coordinates naming a basis monomial.
pub type Key = SmallVec<[CoordId; 4]>;

/// Sort `coords` into a key, returning the permutation sign, or `None` when
/// a coordinate repeats.
pub fn canonical_key(coords: &[CoordId]) -> Option<(Key, f64)> {
    let mut key: Key = coords.iter().copied().collect();
    let mut sign = 1.0;
    // insertion sort counts transpositions
    for i in 1..key.len() {
        let mut j = i;
        while j > 0 && key[j - 1] > key[j] {
            key.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if key.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((key, sign))
}

/// A differential form stored as a sparse map from basis monomials to
/// coefficients. Forms are not tied to a chart: coordinates are global
/// symbols, so forms from different layers combine freely.
#[derive(Debug, Clone, PartialEq)]
pub struct Form<C> {
    degree: usize,
    terms: BTreeMap<Key, C>,
}

pub type ExteriorForm = Form<Expr>;

impl<C: Coefficient> Form<C> {
    pub fn zero(degree: usize) -> Self {
        Form { degree, terms: BTreeMap::new() }
    }

    pub fn scalar(c: C) -> Self {
        let mut f = Form::zero(0);
        f.add_term(&[], c);
        f
    }

    /// The 1-form `dc`.
    pub fn d_coord(c: CoordId) -> Self {
        Form::monomial(C::from_f64(1.0), &[c])
    }

    /// `coeff · dx^{c₁} ∧ … ∧ dx^{c_k}` in any order.
    pub fn monomial(coeff: C, coords: &[CoordId]) -> Self {
        let mut f = Form::zero(coords.len());
        f.add_term(coords, coeff);
        f
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Key, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, coords: &[CoordId]) -> C {
        match canonical_key(coords) {
            Some((key, sign)) => match self.terms.get(&key) {
                Some(c) if sign < 0.0 => c.neg(),
                Some(c) => c.clone(),
                None => C::zero(),
            },
            None => C::zero(),
        }
    }

    /// Coordinates whose differentials appear in some monomial.
    pub fn differentials(&self) -> BTreeSet<CoordId> {
        self.terms.keys().flat_map(|k| k.iter().copied()).collect()
    }

    /// Accumulate `coeff · dx^{coords}`; coordinates may be unsorted.
    pub fn add_term(&mut self, coords: &[CoordId], coeff: C) {
        assert_eq!(coords.len(), self.degree, "monomial degree must match the form");
        if coeff.is_zero() {
            return;
        }
        let Some((key, sign)) = canonical_key(coords) else { return };
        let coeff = if sign < 0.0 { coeff.neg() } else { coeff };
        self.add_key(key, coeff);
    }

    fn add_key(&mut self, key: Key, coeff: C) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(v) => {
                if !coeff.is_zero() {
                    v.insert(coeff);
                }
            }
            Entry::Occupied(mut o) => {
                let s = o.get().add(&coeff);
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Form<C>) -> Form<C> {
        assert_eq!(self.degree, other.degree, "cannot add forms of different degree");
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_key(k.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Form<C>) -> Form<C> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Form<C> {
        self.map(|c| c.neg())
    }

    pub fn scale(&self, s: &C) -> Form<C> {
        self.map(|c| c.mul(s))
    }

    pub fn map<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> Form<D> {
        let mut out = Form::zero(self.degree);
        for (k, c) in &self.terms {
            out.add_key(k.clone(), f(c));
        }
        out
    }

    pub fn try_map<D: Coefficient, E>(&self, f: impl Fn(&C) -> Result<D, E>) -> Result<Form<D>, E> {
        let mut out = Form::zero(self.degree);
        for (k, c) in &self.terms {
            out.add_key(k.clone(), f(c)?);
        }
        Ok(out)
    }

    pub fn wedge(&self, other: &Form<C>) -> Form<C> {
        let mut out = Form::zero(self.degree + other.degree);
        let mut buf: Vec<CoordId> = Vec::with_capacity(out.degree);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                if ka.iter().any(|c| kb.contains(c)) {
                    continue;
                }
                buf.clear();
                buf.extend_from_slice(ka);
                buf.extend_from_slice(kb);
                let (key, sign) = canonical_key(&buf).expect("disjoint keys");
                let c = ca.mul(cb);
                out.add_key(key, if sign < 0.0 { c.neg() } else { c });
            }
        }
        out
    }

    /// Interior product with the coordinate field `∂/∂c`.
    pub fn contract_coord(&self, c: CoordId) -> Form<C> {
        assert!(self.degree >= 1, "cannot contract a function");
        let mut out = Form::zero(self.degree - 1);
        for (k, coeff) in &self.terms {
            if let Some(j) = k.iter().position(|x| *x == c) {
                let mut key = k.clone();
                key.remove(j);
                let v = if j % 2 == 1 { coeff.neg() } else { coeff.clone() };
                out.add_key(key, v);
            }
        }
        out
    }

    /// Value on a tuple of vectors given as component lookups.
    pub fn evaluate_on(&self, vectors: &[&dyn Fn(CoordId) -> f64]) -> f64
    where
        C: Into<f64> + Copy,
    {
        assert_eq!(vectors.len(), self.degree);
        let k = self.degree;
        let mut total = 0.0;
        let mut m = vec![0.0; k * k];
        for (key, c) in &self.terms {
            for (r, coord) in key.iter().enumerate() {
                for (s, v) in vectors.iter().enumerate() {
                    m[r * k + s] = v(*coord);
                }
            }
            total += (*c).into() * det(&mut m.clone(), k);
        }
        total
    }
}

fn det(m: &mut [f64], k: usize) -> f64 {
    let mut d = 1.0;
    for col in 0..k {
        let piv = (col..k)
            .max_by(|a, b| m[a * k + col].abs().partial_cmp(&m[b * k + col].abs()).unwrap())
            .unwrap_or(col);
        if m[piv * k + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..k {
                m.swap(piv * k + j, col * k + j);
            }
            d = -d;
        }
        let p = m[col * k + col];
        d *= p;
        for r in col + 1..k {
            let f = m[r * k + col] / p;
            for j in col..k {
                m[r * k + j] -= f * m[col * k + j];
            }
        }
    }
    d
}

impl Form<Expr> {
    pub fn exterior_d(&self) -> Result<Form<Expr>, ExprError> {
        let mut out = Form::zero(self.degree + 1);
        for (k, c) in &self.terms {
            for a in c.free_coords() {
                if k.contains(&a) {
                    continue;
                }
                let dc = c.diff(a)?;
                if dc.is_zero() {
                    continue;
                }
                let mut coords: Vec<CoordId> = Vec::with_capacity(k.len() + 1);
                coords.push(a);
                coords.extend_from_slice(k);
                out.add_term(&coords, dc);
            }
        }
        Ok(out)
    }

    /// Exterior derivative of a function.
    pub fn d_function(f: &Expr) -> Result<Form<Expr>, ExprError> {
        Form::scalar(f.clone()).exterior_d()
    }

    pub fn eval<L: Lookup + ?Sized>(&self, at: &L) -> Result<Form<f64>, ExprError> {
        self.try_map(|c| c.eval(at))
    }

    /// Substitute expressions for coordinates inside the coefficients only.
    pub fn substitute_coeffs(&self, map: &std::collections::HashMap<CoordId, Expr>) -> Form<Expr> {
        self.map(|c| c.substitute(map))
    }

    /// Coordinates appearing in coefficients or differentials.
    pub fn coords(&self) -> BTreeSet<CoordId> {
        let mut s = self.differentials();
        for c in self.terms.values() {
            s.extend(c.free_coords());
        }
        s
    }
}

impl Form<f64> {
    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn value_on(&self, vectors: &[&dyn Fn(CoordId) -> f64]) -> f64 {
        self.evaluate_on(vectors)
    }
}

/// Pull back along a map given by the images of the coordinate
/// differentials. `images[c]` is the 1-form replacing `dc`; coordinates
/// without an image are kept. Coefficients are transformed by `coeff_map`.
pub fn pullback<C: Coefficient>(
    form: &Form<C>,
    images: &BTreeMap<CoordId, Form<C>>,
    coeff_map: impl Fn(&C) -> C,
) -> Form<C> {
    let mut out = Form::zero(form.degree);
    for (key, coeff) in &form.terms {
        let mut acc = Form::scalar(coeff_map(coeff));
        for c in key {
            let img = images.get(c).cloned().unwrap_or_else(|| Form::d_coord(*c));
            acc = acc.wedge(&img);
            if acc.is_zero() {
                break;
            }
        }
        if !acc.is_zero() {
            out = out.add(&acc);
        }
    }
    out
}
