use std::collections::HashMap;
use std::sync::Arc;

use super::{CoordId, Expr, Node, Prim};
use crate::error::ExprError;

/// Anything that can supply coordinate values.
pub trait Lookup {
    fn value(&self, c: CoordId) -> Option<f64>;
}

impl Lookup for HashMap<CoordId, f64> {
    fn value(&self, c: CoordId) -> Option<f64> {
        self.get(&c).copied()
    }
}

impl<F: Fn(CoordId) -> Option<f64>> Lookup for F {
    fn value(&self, c: CoordId) -> Option<f64> {
        self(c)
    }
}

/// An ordered list of coordinates with O(1) position lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordSpace {
    coords: Vec<CoordId>,
    index: HashMap<CoordId, usize>,
}

impl CoordSpace {
    pub fn new(coords: Vec<CoordId>) -> Self {
        let index = coords.iter().enumerate().map(|(k, c)| (*c, k)).collect();
        CoordSpace { coords, index }
    }

    pub fn coords(&self) -> &[CoordId] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn position(&self, c: CoordId) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn contains(&self, c: CoordId) -> bool {
        self.index.contains_key(&c)
    }
}

/// A full assignment of values to the coordinates of one space.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub space: Arc<CoordSpace>,
    pub values: Vec<f64>,
}

impl Point {
    pub fn new(space: Arc<CoordSpace>, values: Vec<f64>) -> Self {
        assert_eq!(space.dim(), values.len(), "point arity must match its space");
        Point { space, values }
    }

    pub fn zeros(space: Arc<CoordSpace>) -> Self {
        let n = space.dim();
        Point { space, values: vec![0.0; n] }
    }

    pub fn get(&self, c: CoordId) -> Option<f64> {
        self.space.position(c).map(|k| self.values[k])
    }

    pub fn set(&mut self, c: CoordId, v: f64) -> bool {
        match self.space.position(c) {
            Some(k) => {
                self.values[k] = v;
                true
            }
            None => false,
        }
    }

    /// Copy the values of shared coordinates into a point on another space,
    /// filling the rest with zeros.
    pub fn project_to(&self, space: &Arc<CoordSpace>) -> Point {
        let values = space.coords().iter().map(|c| self.get(*c).unwrap_or(0.0)).collect();
        Point { space: space.clone(), values }
    }

    pub fn with(&self, c: CoordId, v: f64) -> Point {
        let mut p = self.clone();
        p.set(c, v);
        p
    }
}

impl Lookup for Point {
    fn value(&self, c: CoordId) -> Option<f64> {
        self.get(c)
    }
}

impl Expr {
    /// IEEE double evaluation.
    pub fn eval<L: Lookup + ?Sized>(&self, at: &L) -> Result<f64, ExprError> {
        eval_node(self, &|c| at.value(c))
    }
}

fn eval_node(e: &Expr, at: &dyn Fn(CoordId) -> Option<f64>) -> Result<f64, ExprError> {
    Ok(match e.node() {
        Node::Const(v) => *v,
        Node::Coord(c) => at(*c).ok_or_else(|| ExprError::MissingCoordinate(format!("{c:?}")))?,
        Node::Sum(xs) => {
            let mut s = 0.0;
            for x in xs {
                s += eval_node(x, at)?;
            }
            s
        }
        Node::Product(xs) => {
            let mut p = 1.0;
            for x in xs {
                p *= eval_node(x, at)?;
            }
            p
        }
        Node::Pow(x, k) => {
            let v = eval_node(x, at)?;
            if v == 0.0 && *k < 0 {
                return Err(ExprError::Domain("zero raised to a negative power".into()));
            }
            v.powi(*k)
        }
        Node::Neg(x) => -eval_node(x, at)?,
        Node::Inv(x) => {
            let v = eval_node(x, at)?;
            if v == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            1.0 / v
        }
        Node::Sqrt(x) => {
            let v = eval_node(x, at)?;
            if v < 0.0 {
                return Err(ExprError::Domain(format!("sqrt of negative value {v:e}")));
            }
            v.sqrt()
        }
        Node::Apply(p, x) => {
            let v = eval_node(x, at)?;
            match p {
                Prim::Sin => v.sin(),
                Prim::Cos => v.cos(),
                Prim::Exp => v.exp(),
                Prim::Log => {
                    if v <= 0.0 {
                        return Err(ExprError::Domain(format!("log of non-positive value {v:e}")));
                    }
                    v.ln()
                }
            }
        }
        Node::External(f, args) => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval_node(a, at)?);
            }
            f.call(&vals)
        }
    })
}
