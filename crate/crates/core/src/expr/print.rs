use std::fmt;

use super::{CoordId, Expr, Node, Space};

/// Maps coordinates to the names the parser accepts.
pub trait CoordNamer {
    fn name(&self, c: CoordId) -> String;
}

/// Zero-based fallback names, used by `Debug`/`Display`.
pub struct DefaultNamer;

impl CoordNamer for DefaultNamer {
    fn name(&self, c: CoordId) -> String {
        match c.space {
            Space::Base => format!("x[{}]", c.mu),
            Space::Fiber => format!("y[{}]", c.i),
            Space::Jet => format!("z[{},{}]", c.i, c.mu),
            Space::MomentumP => "p".to_string(),
            Space::MomentumPmu => format!("p[{},{}]", c.i, c.mu),
            Space::Frame => format!("f[{}]", c.i),
        }
    }
}

impl<F: Fn(CoordId) -> String> CoordNamer for F {
    fn name(&self, c: CoordId) -> String {
        self(c)
    }
}

pub struct Display<'a> {
    expr: &'a Expr,
    namer: &'a dyn CoordNamer,
}

impl Expr {
    pub fn display<'a>(&'a self, namer: &'a dyn CoordNamer) -> Display<'a> {
        Display { expr: self, namer }
    }

    /// Text in the DSL grammar; parses back to an equivalent expression.
    pub fn to_dsl(&self, namer: &dyn CoordNamer) -> String {
        self.display(namer).to_string()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Sum,
    Product,
    Unary,
    Atom,
}

fn prec(e: &Expr) -> Prec {
    match e.node() {
        Node::Const(v) if *v < 0.0 => Prec::Atom,
        Node::Const(_) | Node::Coord(_) | Node::Sqrt(_) | Node::Apply(..) | Node::External(..) => Prec::Atom,
        Node::Pow(..) => Prec::Unary,
        Node::Neg(_) => Prec::Unary,
        Node::Product(_) | Node::Inv(_) => Prec::Product,
        Node::Sum(_) => Prec::Sum,
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v < 0.0 {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{v}")
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, namer: &dyn CoordNamer, min: Prec) -> fmt::Result {
    let own = prec(e);
    let wrap = own < min;
    if wrap {
        write!(f, "(")?;
    }
    match e.node() {
        Node::Const(v) => write_const(f, *v)?,
        Node::Coord(c) => write!(f, "{}", namer.name(*c))?,
        Node::Sum(xs) => {
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    write!(f, " + ")?;
                }
                write_expr(f, x, namer, Prec::Product)?;
            }
        }
        Node::Product(xs) => {
            for (k, x) in xs.iter().enumerate() {
                match x.node() {
                    Node::Inv(d) if k > 0 => {
                        write!(f, "/")?;
                        write_expr(f, d, namer, Prec::Atom)?;
                    }
                    _ => {
                        if k > 0 {
                            write!(f, "*")?;
                        }
                        write_expr(f, x, namer, Prec::Unary)?;
                    }
                }
            }
        }
        Node::Inv(x) => {
            write!(f, "1/")?;
            write_expr(f, x, namer, Prec::Atom)?;
        }
        Node::Pow(x, k) => {
            write_expr(f, x, namer, Prec::Atom)?;
            write!(f, "^{k}")?;
        }
        Node::Neg(x) => {
            write!(f, "-")?;
            write_expr(f, x, namer, Prec::Unary)?;
        }
        Node::Sqrt(x) => {
            write!(f, "sqrt(")?;
            write_expr(f, x, namer, Prec::Sum)?;
            write!(f, ")")?;
        }
        Node::Apply(p, x) => {
            write!(f, "{}(", p.name())?;
            write_expr(f, x, namer, Prec::Sum)?;
            write!(f, ")")?;
        }
        Node::External(g, xs) => {
            write!(f, "{}(", g.name)?;
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    write!(f, ", ")?;
                }
                write_expr(f, x, namer, Prec::Sum)?;
            }
            write!(f, ")")?;
        }
    }
    if wrap {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, self.namer, Prec::Sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_constants_are_parenthesized() {
        let x = Expr::coord(CoordId::base(0));
        let e = x.clone() * -2.0 + 1.0;
        assert_eq!(e.to_string(), "(-2)*x[0] + 1");
        let p = (x.clone() + 1.0).powi(-2);
        assert_eq!(p.to_string(), "(x[0] + 1)^-2");
        assert_eq!((x.clone() / (x + 3.0)).to_string(), "x[0]/(x[0] + 3)");
    }
}
