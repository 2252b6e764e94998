//! Immutable symbolic expressions over bundle coordinates.
//!
//! Expressions are reference-counted trees. Every constructor applies a light
//! normalization (flattening, constant folding, identity removal) so that no
//! `Sum` or `Product` node ever carries two constant children.

mod diff;
mod equiv;
mod eval;
mod parse;
mod print;
mod random;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

pub use equiv::{equiv_detailed, equiv_probabilistic, EquivOptions, EquivOutcome};
pub use eval::{CoordSpace, Lookup, Point};
pub use parse::{parse_expr, Scope, SymbolTable};
pub use random::RandomExpr;
pub use print::{CoordNamer, DefaultNamer};

use crate::error::ExprError;

/// The layer a coordinate belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Space {
    /// Base coordinate `x^μ`.
    Base,
    /// Fiber coordinate `y^i`.
    Fiber,
    /// Jet coordinate `z^i_μ`.
    Jet,
    /// The energy-type momentum `p` of the extended multimomentum bundle.
    MomentumP,
    /// Multimomentum `p^μ_i`.
    MomentumPmu,
    /// Anonymous coordinates of a local linear frame (restricted tangent spaces).
    Frame,
}

/// A coordinate symbol. Indices are zero-based internally; charts map them
/// to user-facing labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct CoordId {
    pub space: Space,
    pub i: u16,
    pub mu: u16,
}

impl CoordId {
    pub const fn base(mu: usize) -> Self {
        CoordId { space: Space::Base, i: 0, mu: mu as u16 }
    }
    pub const fn fiber(i: usize) -> Self {
        CoordId { space: Space::Fiber, i: i as u16, mu: 0 }
    }
    pub const fn jet(i: usize, mu: usize) -> Self {
        CoordId { space: Space::Jet, i: i as u16, mu: mu as u16 }
    }
    pub const fn energy() -> Self {
        CoordId { space: Space::MomentumP, i: 0, mu: 0 }
    }
    pub const fn momentum(i: usize, mu: usize) -> Self {
        CoordId { space: Space::MomentumPmu, i: i as u16, mu: mu as u16 }
    }
    pub const fn frame(k: usize) -> Self {
        CoordId { space: Space::Frame, i: k as u16, mu: 0 }
    }
    pub fn is_base(&self) -> bool {
        self.space == Space::Base
    }
}

/// Elementary functions of one argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Prim {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Prim {
    pub fn name(self) -> &'static str {
        match self {
            Prim::Sin => "sin",
            Prim::Cos => "cos",
            Prim::Exp => "exp",
            Prim::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Prim> {
        Some(match name {
            "sin" => Prim::Sin,
            "cos" => Prim::Cos,
            "exp" => Prim::Exp,
            "log" => Prim::Log,
            _ => return None,
        })
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type PartialFn = dyn Fn(&[Expr]) -> Expr + Send + Sync;

/// A user-registered function of several arguments. Differentiation needs
/// one partial-derivative rule per argument.
pub struct ExternalFn {
    pub name: String,
    eval: Box<EvalFn>,
    partials: Option<Vec<Box<PartialFn>>>,
}

impl ExternalFn {
    pub fn new(name: impl Into<String>, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ExternalFn { name: name.into(), eval: Box::new(eval), partials: None }
    }

    pub fn with_partials(mut self, partials: Vec<Box<PartialFn>>) -> Self {
        self.partials = Some(partials);
        self
    }

    pub fn call(&self, args: &[f64]) -> f64 {
        (self.eval)(args)
    }
}

impl fmt::Debug for ExternalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExternalFn({})", self.name)
    }
}

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Coord(CoordId),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Expr, i32),
    Neg(Expr),
    Inv(Expr),
    Sqrt(Expr),
    Apply(Prim, Expr),
    External(Arc<ExternalFn>, Vec<Expr>),
}

/// Shared, immutable expression tree.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display(&DefaultNamer))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display(&DefaultNamer))
    }
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn constant(v: f64) -> Expr {
        Expr::from_node(Node::Const(v))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn coord(c: CoordId) -> Expr {
        Expr::from_node(Node::Coord(c))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// True only for the literal constant zero.
    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut flat: Vec<Expr> = Vec::new();
        let mut constant = 0.0;
        let mut stack: Vec<Expr> = terms.into_iter().collect();
        stack.reverse();
        while let Some(t) = stack.pop() {
            match t.node() {
                Node::Const(v) => constant += v,
                Node::Sum(children) => {
                    for c in children.iter().rev() {
                        stack.push(c.clone());
                    }
                }
                _ => flat.push(t),
            }
        }
        if constant != 0.0 {
            flat.push(Expr::constant(constant));
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => Expr::from_node(Node::Sum(flat)),
        }
    }

    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut flat: Vec<Expr> = Vec::new();
        let mut coeff = 1.0;
        let mut stack: Vec<Expr> = factors.into_iter().collect();
        stack.reverse();
        while let Some(f) = stack.pop() {
            match f.node() {
                Node::Const(v) => coeff *= v,
                Node::Product(children) => {
                    for c in children.iter().rev() {
                        stack.push(c.clone());
                    }
                }
                Node::Neg(inner) => {
                    coeff = -coeff;
                    stack.push(inner.clone());
                }
                _ => flat.push(f),
            }
        }
        if coeff == 0.0 {
            return Expr::zero();
        }
        if flat.is_empty() {
            return Expr::constant(coeff);
        }
        if coeff != 1.0 {
            flat.insert(0, Expr::constant(coeff));
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::from_node(Node::Product(flat))
        }
    }

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(v) => Expr::constant(-v),
            Node::Neg(inner) => inner.clone(),
            Node::Product(_) => Expr::product([Expr::constant(-1.0), self.clone()]),
            _ => Expr::from_node(Node::Neg(self.clone())),
        }
    }

    pub fn inv(&self) -> Expr {
        match self.node() {
            Node::Const(v) if *v != 0.0 => Expr::constant(1.0 / v),
            Node::Inv(inner) => inner.clone(),
            Node::Pow(base, k) => base.powi(-k),
            _ => Expr::from_node(Node::Inv(self.clone())),
        }
    }

    pub fn powi(&self, k: i32) -> Expr {
        if k == 0 {
            return Expr::one();
        }
        if k == 1 {
            return self.clone();
        }
        if k == -1 {
            return self.inv();
        }
        match self.node() {
            Node::Const(v) if *v != 0.0 || k > 0 => Expr::constant(v.powi(k)),
            Node::Pow(base, j) => base.powi(j * k),
            _ => Expr::from_node(Node::Pow(self.clone(), k)),
        }
    }

    pub fn sqrt(&self) -> Expr {
        match self.node() {
            Node::Const(v) if *v >= 0.0 => Expr::constant(v.sqrt()),
            _ => Expr::from_node(Node::Sqrt(self.clone())),
        }
    }

    pub fn apply(prim: Prim, arg: Expr) -> Expr {
        if let Some(v) = arg.as_const() {
            let folded = match prim {
                Prim::Sin => v.sin(),
                Prim::Cos => v.cos(),
                Prim::Exp => v.exp(),
                Prim::Log => v.ln(),
            };
            if folded.is_finite() {
                return Expr::constant(folded);
            }
        }
        Expr::from_node(Node::Apply(prim, arg))
    }

    pub fn external(f: Arc<ExternalFn>, args: Vec<Expr>) -> Expr {
        Expr::from_node(Node::External(f, args))
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::product([Expr::constant(c), self.clone()])
    }

    /// Coordinates appearing anywhere in the tree.
    pub fn free_coords(&self) -> BTreeSet<CoordId> {
        let mut out = BTreeSet::new();
        self.collect_coords(&mut out);
        out
    }

    fn collect_coords(&self, out: &mut BTreeSet<CoordId>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Coord(c) => {
                out.insert(*c);
            }
            Node::Sum(xs) | Node::Product(xs) | Node::External(_, xs) => {
                for x in xs {
                    x.collect_coords(out);
                }
            }
            Node::Pow(x, _) | Node::Neg(x) | Node::Inv(x) | Node::Sqrt(x) | Node::Apply(_, x) => {
                x.collect_coords(out)
            }
        }
    }

    pub fn depends_on(&self, c: CoordId) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Coord(d) => *d == c,
            Node::Sum(xs) | Node::Product(xs) | Node::External(_, xs) => xs.iter().any(|x| x.depends_on(c)),
            Node::Pow(x, _) | Node::Neg(x) | Node::Inv(x) | Node::Sqrt(x) | Node::Apply(_, x) => x.depends_on(c),
        }
    }

    /// Number of nodes, counting shared subtrees once per occurrence.
    pub fn size(&self) -> usize {
        1 + match self.node() {
            Node::Const(_) | Node::Coord(_) => 0,
            Node::Sum(xs) | Node::Product(xs) | Node::External(_, xs) => xs.iter().map(Expr::size).sum(),
            Node::Pow(x, _) | Node::Neg(x) | Node::Inv(x) | Node::Sqrt(x) | Node::Apply(_, x) => x.size(),
        }
    }

    /// Replace coordinates by expressions, re-normalizing on the way up.
    pub fn substitute(&self, map: &HashMap<CoordId, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.rebuild(&|c| map.get(&c).cloned())
    }

    fn rebuild(&self, f: &dyn Fn(CoordId) -> Option<Expr>) -> Expr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Coord(c) => f(*c).unwrap_or_else(|| self.clone()),
            Node::Sum(xs) => Expr::sum(xs.iter().map(|x| x.rebuild(f))),
            Node::Product(xs) => Expr::product(xs.iter().map(|x| x.rebuild(f))),
            Node::Pow(x, k) => x.rebuild(f).powi(*k),
            Node::Neg(x) => x.rebuild(f).neg(),
            Node::Inv(x) => x.rebuild(f).inv(),
            Node::Sqrt(x) => x.rebuild(f).sqrt(),
            Node::Apply(p, x) => Expr::apply(*p, x.rebuild(f)),
            Node::External(g, xs) => Expr::external(g.clone(), xs.iter().map(|x| x.rebuild(f)).collect()),
        }
    }

    /// Exact partial derivative.
    pub fn diff(&self, c: CoordId) -> Result<Expr, ExprError> {
        diff::diff(self, c)
    }

    /// Gradient with respect to an ordered list of coordinates.
    pub fn gradient(&self, coords: &[CoordId]) -> Result<Vec<Expr>, ExprError> {
        coords.iter().map(|&c| self.diff(c)).collect()
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs.clone())
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, Expr::constant(rhs))
            }
        }
        impl std::ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(Expr::constant(self), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a, b]));
binop!(Sub, sub, |a, b| Expr::sum([a, b.neg()]));
binop!(Mul, mul, |a, b| Expr::product([a, b]));
binop!(Div, div, |a, b| Expr::product([a, b.inv()]));

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Expr {
        Expr::constant(v)
    }
}

impl From<CoordId> for Expr {
    fn from(c: CoordId) -> Expr {
        Expr::coord(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::coord(CoordId::base(0))
    }

    #[test]
    fn annihilator_folds_to_zero() {
        let e = Expr::constant(0.0) * Expr::coord(CoordId::fiber(0));
        assert!(e.is_zero());
    }

    #[test]
    fn sums_never_hold_two_constants() {
        let e = Expr::sum([Expr::constant(1.0), x(), Expr::constant(2.0), Expr::sum([x(), Expr::constant(3.0)])]);
        match e.node() {
            Node::Sum(children) => {
                let consts = children.iter().filter(|c| c.as_const().is_some()).count();
                assert_eq!(consts, 1);
                assert_eq!(children.len(), 3);
            }
            other => panic!("expected sum, got {other:?}"),
        }
    }

    #[test]
    fn zero_power_is_one() {
        assert!(x().powi(0).is_one());
        assert!(matches!(x().powi(2).powi(3).node(), Node::Pow(_, 6)));
    }

    #[test]
    fn negation_is_absorbed_into_product_coefficient() {
        let e = (-x()) * x();
        match e.node() {
            Node::Product(children) => assert_eq!(children[0].as_const(), Some(-1.0)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!((-(-x())).node(), Node::Coord(_)));
    }

    #[test]
    fn substitution_refolds_constants() {
        let y = CoordId::fiber(0);
        let e = Expr::coord(y) * x() + 1.0;
        let mut map = HashMap::new();
        map.insert(y, Expr::zero());
        assert_eq!(e.substitute(&map).as_const(), Some(1.0));
    }
}
