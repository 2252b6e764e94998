use super::{CoordId, Expr, Node, Prim};
use crate::error::ExprError;

pub(super) fn diff(e: &Expr, c: CoordId) -> Result<Expr, ExprError> {
    if !e.depends_on(c) {
        return Ok(Expr::zero());
    }
    Ok(match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Coord(d) => Expr::constant(if *d == c { 1.0 } else { 0.0 }),
        Node::Sum(xs) => {
            let mut terms = Vec::with_capacity(xs.len());
            for x in xs {
                terms.push(diff(x, c)?);
            }
            Expr::sum(terms)
        }
        Node::Product(xs) => {
            let mut terms = Vec::new();
            for (k, x) in xs.iter().enumerate() {
                if !x.depends_on(c) {
                    continue;
                }
                let dx = diff(x, c)?;
                if dx.is_zero() {
                    continue;
                }
                let mut factors: Vec<Expr> = Vec::with_capacity(xs.len());
                for (j, y) in xs.iter().enumerate() {
                    factors.push(if j == k { dx.clone() } else { y.clone() });
                }
                terms.push(Expr::product(factors));
            }
            Expr::sum(terms)
        }
        Node::Pow(x, k) => {
            let dx = diff(x, c)?;
            Expr::product([Expr::constant(*k as f64), x.powi(k - 1), dx])
        }
        Node::Neg(x) => diff(x, c)?.neg(),
        Node::Inv(x) => {
            let dx = diff(x, c)?;
            Expr::product([Expr::constant(-1.0), x.powi(-2), dx])
        }
        Node::Sqrt(x) => {
            let dx = diff(x, c)?;
            Expr::product([Expr::constant(0.5), e.inv(), dx])
        }
        Node::Apply(p, x) => {
            let dx = diff(x, c)?;
            let outer = match p {
                Prim::Sin => Expr::apply(Prim::Cos, x.clone()),
                Prim::Cos => Expr::apply(Prim::Sin, x.clone()).neg(),
                Prim::Exp => e.clone(),
                Prim::Log => x.inv(),
            };
            Expr::product([outer, dx])
        }
        Node::External(f, args) => {
            let partials = f
                .partials
                .as_ref()
                .ok_or_else(|| ExprError::UnregisteredDerivative(f.name.clone()))?;
            if partials.len() != args.len() {
                return Err(ExprError::UnregisteredDerivative(f.name.clone()));
            }
            let mut terms = Vec::new();
            for (k, a) in args.iter().enumerate() {
                let da = diff(a, c)?;
                if da.is_zero() {
                    continue;
                }
                terms.push(Expr::product([(partials[k])(args), da]));
            }
            Expr::sum(terms)
        }
    })
}
