//! Scalar expressions over `x1..xn`: construction with light simplification,
//! exact derivatives, evaluation and a round-trippable text form.
//!
//! ```
//! use nonholo::expr::{parse_components, Variables};
//!
//! let parts = parse_components("x1^2 + sin(x2), 3", &Variables::Indexed(2)).unwrap();
//! let d = parts[0].derivative(0);
//! assert_eq!(d.eval(&[1.5, 0.0]), 3.0);
//! ```

use std::fmt;
use std::ops;
use std::sync::Arc;

use crate::error::ParseError;

#[derive(Debug, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based variable index.
    Var(usize),
    Add(ScalarExpr, ScalarExpr),
    Sub(ScalarExpr, ScalarExpr),
    Mul(ScalarExpr, ScalarExpr),
    Div(ScalarExpr, ScalarExpr),
    Neg(ScalarExpr),
    Pow(ScalarExpr, i32),
    Sin(ScalarExpr),
    Cos(ScalarExpr),
    Exp(ScalarExpr),
}

/// Immutable, cheaply clonable expression tree.
#[derive(Clone, PartialEq)]
pub struct ScalarExpr(Arc<Node>);

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr({self})")
    }
}

impl ScalarExpr {
    fn wrap(node: Node) -> Self {
        ScalarExpr(Arc::new(node))
    }

    pub fn constant(c: f64) -> Self {
        Self::wrap(Node::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(index: usize) -> Self {
        Self::wrap(Node::Var(index))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    fn same(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self == other
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a + b),
            (Some(a), _) if a == 0.0 => other.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Self::wrap(Node::Add(self.clone(), other.clone())),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a - b),
            (_, Some(b)) if b == 0.0 => self.clone(),
            (Some(a), _) if a == 0.0 => other.neg(),
            _ if self.same(other) => Self::zero(),
            _ => Self::wrap(Node::Sub(self.clone(), other.clone())),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => Self::zero(),
            (Some(a), _) if a == 1.0 => other.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => other.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Self::wrap(Node::Mul(self.clone(), other.clone())),
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => Self::constant(a / b),
            (Some(a), _) if a == 0.0 && !other.is_zero() => Self::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Self::wrap(Node::Div(self.clone(), other.clone())),
        }
    }

    pub fn neg(&self) -> Self {
        match self.node() {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::wrap(Node::Neg(self.clone())),
        }
    }

    pub fn powi(&self, k: i32) -> Self {
        match (k, self.as_const()) {
            (0, _) => Self::one(),
            (1, _) => self.clone(),
            (_, Some(c)) if c != 0.0 || k > 0 => Self::constant(c.powi(k)),
            _ => Self::wrap(Node::Pow(self.clone(), k)),
        }
    }

    pub fn sin(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.sin()),
            None => Self::wrap(Node::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.cos()),
            None => Self::wrap(Node::Cos(self.clone())),
        }
    }

    pub fn exp(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.exp()),
            None => Self::wrap(Node::Exp(self.clone())),
        }
    }

    /// Exact partial derivative with respect to the zero-based variable `var`.
    pub fn derivative(&self, var: usize) -> Self {
        match self.node() {
            Node::Const(_) => Self::zero(),
            Node::Var(i) => {
                if *i == var {
                    Self::one()
                } else {
                    Self::zero()
                }
            }
            Node::Add(a, b) => a.derivative(var).add(&b.derivative(var)),
            Node::Sub(a, b) => a.derivative(var).sub(&b.derivative(var)),
            Node::Mul(a, b) => a.derivative(var).mul(b).add(&a.mul(&b.derivative(var))),
            Node::Div(a, b) => {
                let num = a.derivative(var).mul(b).sub(&a.mul(&b.derivative(var)));
                num.div(&b.powi(2))
            }
            Node::Neg(a) => a.derivative(var).neg(),
            Node::Pow(a, k) => Self::constant(*k as f64)
                .mul(&a.powi(k - 1))
                .mul(&a.derivative(var)),
            Node::Sin(a) => a.cos().mul(&a.derivative(var)),
            Node::Cos(a) => a.sin().neg().mul(&a.derivative(var)),
            Node::Exp(a) => self.mul(&a.derivative(var)),
        }
    }

    /// Evaluates the expression; division by zero yields a non-finite value.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.node() {
            Node::Const(c) => *c,
            Node::Var(i) => x[*i],
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Neg(a) => -a.eval(x),
            Node::Pow(a, k) => a.eval(x).powi(*k),
            Node::Sin(a) => a.eval(x).sin(),
            Node::Cos(a) => a.eval(x).cos(),
            Node::Exp(a) => a.eval(x).exp(),
        }
    }

    /// Like [`eval`](Self::eval) but reports poles instead of returning them.
    pub fn try_eval(&self, x: &[f64]) -> crate::Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(crate::Error::NonFinite(format!(" evaluating {self} at {x:?}")))
        }
    }

    /// Largest variable index referenced plus one.
    pub fn arity(&self) -> usize {
        match self.node() {
            Node::Const(_) => 0,
            Node::Var(i) => i + 1,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.arity().max(b.arity())
            }
            Node::Neg(a) | Node::Pow(a, _) | Node::Sin(a) | Node::Cos(a) | Node::Exp(a) => {
                a.arity()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match self.node() {
            Node::Const(c) => {
                if *c < 0.0 || c.is_sign_negative() {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Add(a, b) => {
                a.write_at(f, 1)?;
                write!(f, " + ")?;
                b.write_at(f, 2)
            }
            Node::Sub(a, b) => {
                a.write_at(f, 1)?;
                write!(f, " - ")?;
                b.write_at(f, 2)
            }
            Node::Mul(a, b) => {
                a.write_at(f, 2)?;
                write!(f, "*")?;
                b.write_at(f, 3)
            }
            Node::Div(a, b) => {
                a.write_at(f, 2)?;
                write!(f, "/")?;
                b.write_at(f, 3)
            }
            Node::Neg(a) => {
                write!(f, "-")?;
                a.write_at(f, 3)
            }
            Node::Pow(a, k) => {
                a.write_at(f, 5)?;
                write!(f, "^{k}")
            }
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

impl ops::Add for &ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: Self) -> ScalarExpr {
        ScalarExpr::add(self, rhs)
    }
}

impl ops::Sub for &ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: Self) -> ScalarExpr {
        ScalarExpr::sub(self, rhs)
    }
}

impl ops::Mul for &ScalarExpr {
    type Output = ScalarExpr;
    fn mul(self, rhs: Self) -> ScalarExpr {
        ScalarExpr::mul(self, rhs)
    }
}

impl ops::Div for &ScalarExpr {
    type Output = ScalarExpr;
    fn div(self, rhs: Self) -> ScalarExpr {
        ScalarExpr::div(self, rhs)
    }
}

impl ops::Neg for &ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::neg(self)
    }
}

/// How identifiers map to variables while parsing.
#[derive(Debug, Clone)]
pub enum Variables {
    /// `x1..xn`.
    Indexed(usize),
    /// Explicit names, in order.
    Named(Vec<String>),
}

impl Variables {
    fn resolve(&self, name: &str) -> Option<usize> {
        match self {
            Variables::Indexed(n) => {
                let digits = name.strip_prefix('x')?;
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                let i: usize = digits.parse().ok()?;
                (1..=*n).contains(&i).then(|| i - 1)
            }
            Variables::Named(names) => names.iter().position(|v| v == name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                line: l0,
                column: c0,
                message: format!("malformed number `{text}`"),
            })?;
            col += i - start;
            out.push(Token {
                tok: Tok::Num(value),
                line: l0,
                column: c0,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: l0,
                column: c0,
            });
            continue;
        }
        if "+-*/^(),".contains(c) {
            out.push(Token {
                tok: Tok::Sym(c),
                line: l0,
                column: c0,
            });
            i += 1;
            col += 1;
            continue;
        }
        return Err(ParseError::Syntax {
            line: l0,
            column: c0,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    vars: &'a Variables,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match &self.peek().tok {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek().tok == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            let found = self.describe();
            self.fail(format!("expected `{c}`, found {found}"))
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Sym('+') => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Tok::Sym('-') => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek().tok {
                Tok::Sym('*') => {
                    self.bump();
                    acc = acc.mul(&self.factor()?);
                }
                Tok::Sym('/') => {
                    self.bump();
                    acc = acc.div(&self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<ScalarExpr, ParseError> {
        if self.peek().tok == Tok::Sym('-') {
            self.bump();
            return Ok(self.factor()?.neg());
        }
        let base = self.base()?;
        if self.peek().tok != Tok::Sym('^') {
            return Ok(base);
        }
        self.bump();
        let negative = if self.peek().tok == Tok::Sym('-') {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().tok {
            Tok::Num(v) if v.fract() == 0.0 && v <= i32::MAX as f64 => {
                self.bump();
                let k = v as i32;
                Ok(base.powi(if negative { -k } else { k }))
            }
            _ => {
                let found = self.describe();
                self.fail(format!("expected integer exponent, found {found}"))
            }
        }
    }

    fn base(&mut self) -> Result<ScalarExpr, ParseError> {
        let tok = self.peek().clone();
        match tok.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(ScalarExpr::constant(v))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "sin" | "cos" | "exp" => {
                        self.expect('(')?;
                        let arg = self.expr()?;
                        self.expect(')')?;
                        Ok(match name.as_str() {
                            "sin" => arg.sin(),
                            "cos" => arg.cos(),
                            _ => arg.exp(),
                        })
                    }
                    _ => match self.vars.resolve(&name) {
                        Some(i) => Ok(ScalarExpr::var(i)),
                        None => Err(ParseError::UnknownIdentifier {
                            name,
                            line: tok.line,
                            column: tok.column,
                        }),
                    },
                }
            }
            _ => {
                let found = self.describe();
                self.fail(format!("expected operand, found {found}"))
            }
        }
    }
}

/// Parses comma separated components.
pub fn parse_components(src: &str, vars: &Variables) -> Result<Vec<ScalarExpr>, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        vars,
    };
    let mut out = vec![p.expr()?];
    while p.peek().tok == Tok::Sym(',') {
        p.bump();
        out.push(p.expr()?);
    }
    if p.peek().tok != Tok::End {
        let found = p.describe();
        return p.fail(format!("unexpected {found}"));
    }
    Ok(out)
}

/// Parses a single expression in `x1..xn`.
pub fn parse_scalar(src: &str, n: usize) -> Result<ScalarExpr, ParseError> {
    let mut parts = parse_components(src, &Variables::Indexed(n))?;
    if parts.len() != 1 {
        return Err(ParseError::DimensionMismatch {
            expected: 1,
            found: parts.len(),
        });
    }
    Ok(parts.remove(0))
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Pow(i32),
    Sin,
    Cos,
    Exp,
}

/// Postfix program evaluating several expressions in one pass.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    ends: Vec<usize>,
    depth: usize,
}

impl Tape {
    pub fn new<'a>(exprs: impl IntoIterator<Item = &'a ScalarExpr>) -> Self {
        let mut ops = Vec::new();
        let mut ends = Vec::new();
        let mut depth = 0;
        for e in exprs {
            let d = emit(e, &mut ops);
            depth = depth.max(d);
            ends.push(ops.len());
        }
        Tape { ops, ends, depth }
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// Writes each expression's value into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let mut stack = [0.0f64; 64];
        let mut heap;
        let st: &mut [f64] = if self.depth <= stack.len() {
            &mut stack
        } else {
            heap = vec![0.0; self.depth];
            &mut heap
        };
        let mut start = 0;
        for (k, &end) in self.ends.iter().enumerate() {
            let mut sp = 0usize;
            for op in &self.ops[start..end] {
                match *op {
                    Op::Const(c) => {
                        st[sp] = c;
                        sp += 1;
                    }
                    Op::Var(i) => {
                        st[sp] = x[i];
                        sp += 1;
                    }
                    Op::Add => {
                        sp -= 1;
                        st[sp - 1] += st[sp];
                    }
                    Op::Sub => {
                        sp -= 1;
                        st[sp - 1] -= st[sp];
                    }
                    Op::Mul => {
                        sp -= 1;
                        st[sp - 1] *= st[sp];
                    }
                    Op::Div => {
                        sp -= 1;
                        st[sp - 1] /= st[sp];
                    }
                    Op::Neg => st[sp - 1] = -st[sp - 1],
                    Op::Pow(k) => st[sp - 1] = st[sp - 1].powi(k),
                    Op::Sin => st[sp - 1] = st[sp - 1].sin(),
                    Op::Cos => st[sp - 1] = st[sp - 1].cos(),
                    Op::Exp => st[sp - 1] = st[sp - 1].exp(),
                }
            }
            out[k] = st[0];
            start = end;
        }
    }
}

fn emit(e: &ScalarExpr, ops: &mut Vec<Op>) -> usize {
    match e.node() {
        Node::Const(c) => {
            ops.push(Op::Const(*c));
            1
        }
        Node::Var(i) => {
            ops.push(Op::Var(*i));
            1
        }
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            let da = emit(a, ops);
            let db = emit(b, ops);
            ops.push(match e.node() {
                Node::Add(..) => Op::Add,
                Node::Sub(..) => Op::Sub,
                Node::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
            da.max(db + 1)
        }
        Node::Neg(a) => {
            let d = emit(a, ops);
            ops.push(Op::Neg);
            d
        }
        Node::Pow(a, k) => {
            let d = emit(a, ops);
            ops.push(Op::Pow(*k));
            d
        }
        Node::Sin(a) | Node::Cos(a) | Node::Exp(a) => {
            let d = emit(a, ops);
            ops.push(match e.node() {
                Node::Sin(_) => Op::Sin,
                Node::Cos(_) => Op::Cos,
                _ => Op::Exp,
            });
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str, n: usize) -> ScalarExpr {
        parse_scalar(src, n).unwrap()
    }

    #[test]
    fn precedence_and_power() {
        let e = p("1 + 2*x1^2 - x2/4", 2);
        assert_eq!(e.eval(&[3.0, 8.0]), 1.0 + 18.0 - 2.0);
        assert_eq!(p("-x1^2", 1).eval(&[3.0]), -9.0);
        assert_eq!(p("2^-2", 1).eval(&[0.0]), 0.25);
        assert_eq!(p("x1 - x1 - x1", 1).eval(&[1.0]), -1.0);
    }

    #[test]
    fn trailing_operator_is_a_syntax_error() {
        match parse_scalar("x1 +", 1) {
            Err(ParseError::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn error_positions_track_lines() {
        match parse_components("x1,\n  x2 * )", &Variables::Indexed(2)) {
            Err(ParseError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 8)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            parse_scalar("y + 1", 3),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_scalar("x4", 3),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_scalar("x0", 3),
            Err(ParseError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn derivative_rules() {
        let e = p("sin(x1)*exp(x2) + x1^3/x2", 2);
        let x = [0.7, 1.3];
        let dx = e.derivative(0).eval(&x);
        let dy = e.derivative(1).eval(&x);
        let ex = 0.7f64.cos() * 1.3f64.exp() + 3.0 * 0.49 / 1.3;
        let ey = 0.7f64.sin() * 1.3f64.exp() - 0.343 / (1.3 * 1.3);
        assert!((dx - ex).abs() < 1e-14);
        assert!((dy - ey).abs() < 1e-14);
        assert!(p("3.5", 2).derivative(0).is_zero());
    }

    #[test]
    fn simplification_is_local() {
        assert!(p("0*x1 + 0", 1).is_zero());
        assert_eq!(p("1*x1", 1), ScalarExpr::var(0));
        assert!(p("x1*x2 - x1*x2", 2).is_zero());
        assert_eq!(p("2+3", 1).as_const(), Some(5.0));
    }

    #[test]
    fn tape_matches_tree() {
        let parts = parse_components(
            "x1*x2 - cos(x3)/(1 + x1^2), exp(-x2)*sin(x1), 4",
            &Variables::Indexed(3),
        )
        .unwrap();
        let tape = Tape::new(&parts);
        let x = [0.3, -1.1, 2.0];
        let mut out = [0.0; 3];
        tape.eval_into(&x, &mut out);
        for (k, e) in parts.iter().enumerate() {
            assert_eq!(out[k], e.eval(&x));
        }
    }

    #[test]
    fn poles_are_reported() {
        assert!(p("1/x1", 1).try_eval(&[0.0]).is_err());
    }

    #[test]
    fn named_variables() {
        let parts = parse_components("t^2, 0, t", &Variables::Named(vec!["t".into()])).unwrap();
        assert_eq!(parts[0].eval(&[3.0]), 9.0);
    }
}
