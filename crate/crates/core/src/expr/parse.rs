//! Recursive-descent parser for the theory DSL.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | base ('^' ['-'] INT)?
//! base   := NUMBER | IDENT ('[' index (',' index)* ']')? | '(' expr ')'
//!         | FUNC '(' expr ')' | 'det2(' IDENT ')'
//!         | 'sum(' IDENT ',' INT ',' INT ',' expr ')'
//! ```
//!
//! Names resolve against chart coordinates first, then parameters, then
//! bound summation indices. `det2(h)` is the 2×2 determinant of the entries
//! `h[a,b]` (with `h[b,a]` as a fallback, as for any two-index name), and
//! `hinv[a,b]` the matching cofactor inverse.

use std::collections::HashMap;

use super::{CoordId, Expr, Prim};
use crate::error::ExprError;

/// Source of coordinate names for parsing.
pub trait SymbolTable {
    fn resolve(&self, name: &str) -> Option<CoordId>;
    fn names(&self) -> Vec<String>;
}

/// Everything the parser can refer to besides literals.
pub struct Scope<'a> {
    pub symbols: &'a dyn SymbolTable,
    pub params: HashMap<String, f64>,
    /// Indices summed over the whole expression, outermost first.
    pub implicit_sums: Vec<(String, i64, i64)>,
}

impl<'a> Scope<'a> {
    pub fn new(symbols: &'a dyn SymbolTable) -> Self {
        Scope { symbols, params: HashMap::new(), implicit_sums: Vec::new() }
    }

    pub fn with_params(mut self, params: HashMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_implicit_sum(mut self, index: &str, lo: i64, hi: i64) -> Self {
        self.implicit_sums.push((index.to_string(), lo, hi));
        self
    }
}

pub fn parse_expr(text: &str, scope: &Scope<'_>) -> Result<Expr, ExprError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0, scope, env: Vec::new(), end: text.len() };
    let sums = scope.implicit_sums.clone();
    let e = p.parse_with_sums(&sums)?;
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBrack,
            ']' => Tok::RBrack,
            ',' => Tok::Comma,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            _ if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{lit}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(ExprError::Syntax { pos: start, msg: format!("unexpected character `{c}`") });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'s, 'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    scope: &'s Scope<'a>,
    env: Vec<(String, i64)>,
    end: usize,
}

impl<'s, 'a> Parser<'s, 'a> {
    fn parse_with_sums(&mut self, sums: &[(String, i64, i64)]) -> Result<Expr, ExprError> {
        match sums.split_first() {
            None => {
                let e = self.expr()?;
                if self.pos != self.tokens.len() {
                    return Err(self.error("trailing input"));
                }
                Ok(e)
            }
            Some(((name, lo, hi), rest)) => {
                let mut terms = Vec::new();
                for v in *lo..=*hi {
                    self.pos = 0;
                    self.env.push((name.clone(), v));
                    let t = self.parse_with_sums(rest);
                    self.env.pop();
                    terms.push(t?);
                }
                Ok(Expr::sum(terms))
            }
        }
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.1).unwrap_or(self.end)
    }

    fn error(&self, msg: &str) -> ExprError {
        ExprError::Syntax { pos: self.here(), msg: msg.to_string() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), ExprError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(&Tok::Plus) {
                terms.push(self.term()?);
            } else if self.eat(&Tok::Minus) {
                terms.push(self.term()?.neg());
            } else {
                break;
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut factors = vec![self.factor()?];
        loop {
            if self.eat(&Tok::Star) {
                factors.push(self.factor()?);
            } else if self.eat(&Tok::Slash) {
                factors.push(self.factor()?.inv());
            } else {
                break;
            }
        }
        Ok(Expr::product(factors))
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.eat(&Tok::Minus) {
            return Ok(self.factor()?.neg());
        }
        let base = self.base()?;
        if self.eat(&Tok::Caret) {
            let k = self.signed_int()?;
            let k = i32::try_from(k).map_err(|_| self.error("exponent out of range"))?;
            return Ok(base.powi(k));
        }
        Ok(base)
    }

    fn signed_int(&mut self) -> Result<i64, ExprError> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().cloned() {
            Some(Tok::Num(v)) if v.fract() == 0.0 => {
                self.pos += 1;
                Ok(if neg { -(v as i64) } else { v as i64 })
            }
            _ => Err(self.error("expected integer")),
        }
    }

    fn ident(&mut self) -> Result<String, ExprError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        let start = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::constant(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    return self.call(&name, start);
                }
                if self.eat(&Tok::LBrack) {
                    let mut labels = vec![self.index()?];
                    while self.eat(&Tok::Comma) {
                        labels.push(self.index()?);
                    }
                    self.expect(&Tok::RBrack, "`]`")?;
                    return self.indexed(&name, &labels, start);
                }
                self.resolve_bare(&name, start)
            }
            _ => Err(self.error("expected operand")),
        }
    }

    fn index(&mut self) -> Result<String, ExprError> {
        let start = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 0.0 => {
                self.pos += 1;
                Ok(format!("{}", v as i64))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                match self.env.iter().rev().find(|(n, _)| *n == s) {
                    Some((_, v)) => Ok(v.to_string()),
                    None => Err(ExprError::UnknownCoordinate { name: s, pos: start }),
                }
            }
            _ => Err(self.error("expected index")),
        }
    }

    fn lookup(&self, name: &str) -> Option<Expr> {
        if let Some(c) = self.scope.symbols.resolve(name) {
            return Some(Expr::coord(c));
        }
        self.scope.params.get(name).map(|v| Expr::constant(*v))
    }

    fn resolve_bare(&self, name: &str, pos: usize) -> Result<Expr, ExprError> {
        if let Some(e) = self.lookup(name) {
            return Ok(e);
        }
        if let Some((_, v)) = self.env.iter().rev().find(|(n, _)| n == name) {
            return Ok(Expr::constant(*v as f64));
        }
        Err(ExprError::UnknownCoordinate { name: name.to_string(), pos })
    }

    fn indexed(&self, stem: &str, labels: &[String], pos: usize) -> Result<Expr, ExprError> {
        let full = format!("{stem}[{}]", labels.join(","));
        if let Some(e) = self.lookup(&full) {
            return Ok(e);
        }
        // symmetric matrices store one triangle
        if labels.len() == 2 {
            if let Some(e) = self.lookup(&format!("{stem}[{},{}]", labels[1], labels[0])) {
                return Ok(e);
            }
        }
        if let Some(mat) = stem.strip_suffix("inv") {
            if labels.len() == 2 && !mat.is_empty() {
                if let Ok(m) = self.matrix2(mat, pos) {
                    let a = m.position(&labels[0]);
                    let b = m.position(&labels[1]);
                    if let (Some(a), Some(b)) = (a, b) {
                        return Ok(m.inverse_entry(a, b));
                    }
                }
            }
        }
        Err(ExprError::UnknownCoordinate { name: full, pos })
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Expr, ExprError> {
        self.expect(&Tok::LParen, "`(`")?;
        let e = match name {
            "sqrt" => self.expr()?.sqrt(),
            "det2" => {
                let stem_pos = self.here();
                let stem = self.ident()?;
                self.matrix2(&stem, stem_pos)?.det()
            }
            "sum" => {
                let var = self.ident()?;
                self.expect(&Tok::Comma, "`,`")?;
                let lo = self.signed_int()?;
                self.expect(&Tok::Comma, "`,`")?;
                let hi = self.signed_int()?;
                self.expect(&Tok::Comma, "`,`")?;
                if lo > hi {
                    return Err(self.error("empty summation range"));
                }
                let body_start = self.pos;
                let mut terms = Vec::new();
                let mut body_end = body_start;
                for v in lo..=hi {
                    self.pos = body_start;
                    self.env.push((var.clone(), v));
                    let t = self.expr();
                    self.env.pop();
                    terms.push(t?);
                    body_end = self.pos;
                }
                self.pos = body_end;
                Expr::sum(terms)
            }
            other => match Prim::from_name(other) {
                Some(p) => Expr::apply(p, self.expr()?),
                None => {
                    return Err(ExprError::UnknownCoordinate { name: other.to_string(), pos });
                }
            },
        };
        self.expect(&Tok::RParen, "`)`")?;
        Ok(e)
    }

    fn matrix2(&self, stem: &str, pos: usize) -> Result<Matrix2, ExprError> {
        let prefix = format!("{stem}[");
        let mut labels: Vec<String> = Vec::new();
        let mut names = self.scope.symbols.names();
        names.extend(self.scope.params.keys().cloned());
        for n in names {
            if let Some(rest) = n.strip_prefix(&prefix).and_then(|r| r.strip_suffix(']')) {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() == 2 {
                    for p in parts {
                        if !labels.iter().any(|l| l == p) {
                            labels.push(p.to_string());
                        }
                    }
                }
            }
        }
        labels.sort_by(|a, b| match (a.parse::<i64>(), b.parse::<i64>()) {
            (Ok(x), Ok(y)) => x.cmp(&y),
            _ => a.cmp(b),
        });
        if labels.len() != 2 {
            return Err(ExprError::UnknownCoordinate { name: format!("{stem} (2x2 matrix)"), pos });
        }
        let mut entries: Vec<Expr> = Vec::with_capacity(4);
        for a in 0..2 {
            for b in 0..2 {
                let direct = format!("{stem}[{},{}]", labels[a], labels[b]);
                let swapped = format!("{stem}[{},{}]", labels[b], labels[a]);
                let e = self
                    .lookup(&direct)
                    .or_else(|| self.lookup(&swapped))
                    .ok_or(ExprError::UnknownCoordinate { name: direct, pos })?;
                entries.push(e);
            }
        }
        Ok(Matrix2 { labels, entries })
    }
}

struct Matrix2 {
    labels: Vec<String>,
    entries: Vec<Expr>,
}

impl Matrix2 {
    fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn at(&self, a: usize, b: usize) -> &Expr {
        &self.entries[2 * a + b]
    }

    fn det(&self) -> Expr {
        self.at(0, 0) * self.at(1, 1) - self.at(0, 1) * self.at(1, 0)
    }

    fn inverse_entry(&self, a: usize, b: usize) -> Expr {
        let cof = match (a, b) {
            (0, 0) => self.at(1, 1).clone(),
            (1, 1) => self.at(0, 0).clone(),
            (0, 1) => self.at(0, 1).neg(),
            _ => self.at(1, 0).neg(),
        };
        cof / self.det()
    }
}
