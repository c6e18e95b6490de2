//! Polynomial vector fields: parsing, symbolic Jacobian, and evaluation in
//! floating point, interval, and truncated power-series (jet) arithmetic.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::interval::{IBox, Interval};
use crate::matrix::IMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier '{name}' at {pos}")]
    UnknownIdent { name: String, pos: usize },
    #[error("exponent at {pos} must be a non-negative integer literal")]
    NonIntegerExponent { pos: usize },
    #[error("division by a non-constant or zero expression")]
    BadDivisor,
    #[error("expected {expected} components, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("duplicate name '{0}'")]
    Duplicate(String),
    #[error("taylor order must be at least 2, got {0}")]
    Order(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

/// Names used when printing an expression.
pub struct Names<'a> {
    pub vars: &'a [String],
    pub params: &'a [String],
}

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    pub fn display<'a>(&'a self, names: &'a Names<'a>) -> ExprDisplay<'a> {
        ExprDisplay { e: self, names }
    }

    /// Constant value if the expression has no variables.
    pub fn const_value(&self, params: &[f64]) -> Option<f64> {
        Some(match self {
            Expr::Num(c) => *c,
            Expr::Var(_) => return None,
            Expr::Param(i) => params[*i],
            Expr::Neg(a) => -a.const_value(params)?,
            Expr::Add(a, b) => a.const_value(params)? + b.const_value(params)?,
            Expr::Sub(a, b) => a.const_value(params)? - b.const_value(params)?,
            Expr::Mul(a, b) => a.const_value(params)? * b.const_value(params)?,
            Expr::Div(a, b) => a.const_value(params)? / b.const_value(params)?,
            Expr::Pow(a, n) => a.const_value(params)?.powi(*n as i32),
        })
    }

    fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(c) if *c == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Num(c) if *c == 1.0)
    }

    fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if b.is_zero() => a,
            (a, b) if a.is_zero() => Expr::neg(b),
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(x) => Expr::Num(-x),
            Expr::Neg(b) => *b,
            a => Expr::Neg(Box::new(a)),
        }
    }

    fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, _) if a.is_zero() => Expr::Num(0.0),
            (_, b) if b.is_zero() => Expr::Num(0.0),
            (a, b) if a.is_one() => b,
            (a, b) if b.is_one() => a,
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, _) if a.is_zero() => Expr::Num(0.0),
            (a, b) if b.is_one() => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    fn pow(a: Expr, n: u32) -> Expr {
        match n {
            0 => Expr::Num(1.0),
            1 => a,
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    /// Symbolic partial derivative with respect to variable `v`.
    pub fn derive(&self, v: usize) -> Expr {
        match self {
            Expr::Num(_) | Expr::Param(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.derive(v)),
            Expr::Add(a, b) => Expr::add(a.derive(v), b.derive(v)),
            Expr::Sub(a, b) => Expr::sub(a.derive(v), b.derive(v)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derive(v), (**b).clone()),
                Expr::mul((**a).clone(), b.derive(v)),
            ),
            Expr::Div(a, b) => Expr::div(a.derive(v), (**b).clone()),
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::Num(*n as f64), Expr::pow((**a).clone(), n - 1)),
                a.derive(v),
            ),
        }
    }
}

pub struct ExprDisplay<'a> {
    e: &'a Expr,
    names: &'a Names<'a>,
}

impl ExprDisplay<'_> {
    fn child(&self, e: &Expr, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let d = ExprDisplay { e, names: self.names };
        if e.prec() < min_prec || matches!(e, Expr::Num(c) if *c < 0.0) {
            write!(f, "({d})")
        } else {
            write!(f, "{d}")
        }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.e {
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "{}", self.names.vars[*i]),
            Expr::Param(i) => write!(f, "{}", self.names.params[*i]),
            Expr::Neg(a) => {
                write!(f, "-")?;
                self.child(a, f, 5)
            }
            Expr::Add(a, b) => {
                self.child(a, f, 1)?;
                write!(f, " + ")?;
                self.child(b, f, 2)
            }
            Expr::Sub(a, b) => {
                self.child(a, f, 1)?;
                write!(f, " - ")?;
                self.child(b, f, 2)
            }
            Expr::Mul(a, b) => {
                self.child(a, f, 2)?;
                write!(f, "*")?;
                self.child(b, f, 3)
            }
            Expr::Div(a, b) => {
                self.child(a, f, 2)?;
                write!(f, "/")?;
                self.child(b, f, 3)
            }
            Expr::Pow(a, n) => {
                self.child(a, f, 5)?;
                write!(f, "^{n}")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [String],
    params: &'a [String],
}

impl Parser<'_> {
    fn err<T>(&self, msg: &str) -> Result<T, FieldError> {
        Err(FieldError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = if c == b'*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, FieldError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let next = self.src.get(self.pos).copied();
            if start == self.pos || matches!(next, Some(b'.' | b'e' | b'E')) {
                return Err(FieldError::NonIntegerExponent { pos: start });
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let n: u32 = s
                .parse()
                .map_err(|_| FieldError::NonIntegerExponent { pos: start })?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, FieldError> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.base()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => self.err("unexpected character"),
        }
    }

    fn number(&mut self) -> Result<Expr, FieldError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let ds = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if ds == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => Err(FieldError::Syntax {
                pos: start,
                msg: format!("bad number '{text}'"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Expr, FieldError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            Ok(Expr::Var(i))
        } else if let Some(i) = self.params.iter().position(|v| v == name) {
            Ok(Expr::Param(i))
        } else {
            Err(FieldError::UnknownIdent {
                name: name.to_string(),
                pos: start,
            })
        }
    }
}

/// Parse a single expression over the given variable and parameter names.
pub fn parse_expr(text: &str, vars: &[String], params: &[String]) -> Result<Expr, FieldError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        vars,
        params,
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Sqr(usize),
    Neg(usize),
    Scale(usize, f64),
    DivC(usize, f64),
}

/// A straight-line program with shared subexpressions.
#[derive(Debug, Clone)]
struct Tape {
    ops: Vec<Op>,
    outs: Vec<usize>,
}

#[derive(Default)]
struct TapeBuilder {
    ops: Vec<Op>,
    memo: HashMap<OpKey, usize>,
}

#[derive(Hash, PartialEq, Eq)]
enum OpKey {
    Const(u64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Sqr(usize),
    Neg(usize),
    Scale(usize, u64),
    DivC(usize, u64),
}

impl TapeBuilder {
    fn push(&mut self, op: Op) -> usize {
        let key = match op {
            Op::Const(c) => OpKey::Const(c.to_bits()),
            Op::Var(i) => OpKey::Var(i),
            Op::Add(a, b) => OpKey::Add(a.min(b), a.max(b)),
            Op::Sub(a, b) => OpKey::Sub(a, b),
            Op::Mul(a, b) => OpKey::Mul(a.min(b), a.max(b)),
            Op::Sqr(a) => OpKey::Sqr(a),
            Op::Neg(a) => OpKey::Neg(a),
            Op::Scale(a, c) => OpKey::Scale(a, c.to_bits()),
            Op::DivC(a, c) => OpKey::DivC(a, c.to_bits()),
        };
        if let Some(&i) = self.memo.get(&key) {
            return i;
        }
        self.ops.push(op);
        let i = self.ops.len() - 1;
        self.memo.insert(key, i);
        i
    }

    fn konst(&self, i: usize) -> Option<f64> {
        match self.ops[i] {
            Op::Const(c) => Some(c),
            _ => None,
        }
    }

    fn emit(&mut self, e: &Expr, params: &[f64]) -> Result<usize, FieldError> {
        if let Some(c) = e.const_value(params) {
            // constant folding is done in floating point; constants are taken as exact
            return Ok(self.push(Op::Const(c)));
        }
        Ok(match e {
            Expr::Num(_) | Expr::Param(_) => unreachable!(),
            Expr::Var(i) => self.push(Op::Var(*i)),
            Expr::Neg(a) => {
                let a = self.emit(a, params)?;
                self.push(Op::Neg(a))
            }
            Expr::Add(a, b) => {
                let (a, b) = (self.emit(a, params)?, self.emit(b, params)?);
                self.push(Op::Add(a, b))
            }
            Expr::Sub(a, b) => {
                let (a, b) = (self.emit(a, params)?, self.emit(b, params)?);
                self.push(Op::Sub(a, b))
            }
            Expr::Mul(a, b) => {
                let (a, b) = (self.emit(a, params)?, self.emit(b, params)?);
                match (self.konst(a), self.konst(b)) {
                    (Some(c), _) => self.push(Op::Scale(b, c)),
                    (_, Some(c)) => self.push(Op::Scale(a, c)),
                    _ if a == b => self.push(Op::Sqr(a)),
                    _ => self.push(Op::Mul(a, b)),
                }
            }
            Expr::Div(a, b) => {
                let c = b.const_value(params).ok_or(FieldError::BadDivisor)?;
                if c == 0.0 || !c.is_finite() {
                    return Err(FieldError::BadDivisor);
                }
                let a = self.emit(a, params)?;
                self.push(Op::DivC(a, c))
            }
            Expr::Pow(a, n) => {
                let a = self.emit(a, params)?;
                self.pow(a, *n)
            }
        })
    }

    fn pow(&mut self, a: usize, n: u32) -> usize {
        match n {
            0 => self.push(Op::Const(1.0)),
            1 => a,
            _ => {
                let h = self.pow(a, n / 2);
                let s = self.push(Op::Sqr(h));
                if n % 2 == 1 {
                    self.push(Op::Mul(s, a))
                } else {
                    s
                }
            }
        }
    }

    fn finish(self, outs: Vec<usize>) -> Tape {
        Tape { ops: self.ops, outs }
    }
}

impl Tape {
    fn compile(exprs: &[&Expr], params: &[f64]) -> Result<Tape, FieldError> {
        let mut b = TapeBuilder::default();
        let mut outs = Vec::with_capacity(exprs.len());
        for e in exprs {
            outs.push(b.emit(e, params)?);
        }
        Ok(b.finish(outs))
    }

    fn eval_f64(&self, x: &[f64], buf: &mut Vec<f64>, out: &mut [f64]) {
        buf.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => x[i],
                Op::Add(a, b) => buf[a] + buf[b],
                Op::Sub(a, b) => buf[a] - buf[b],
                Op::Mul(a, b) => buf[a] * buf[b],
                Op::Sqr(a) => buf[a] * buf[a],
                Op::Neg(a) => -buf[a],
                Op::Scale(a, c) => buf[a] * c,
                Op::DivC(a, c) => buf[a] / c,
            };
            buf.push(v);
        }
        for (o, &i) in out.iter_mut().zip(&self.outs) {
            *o = buf[i];
        }
    }

    fn eval_iv(&self, x: &[Interval], buf: &mut Vec<Interval>, out: &mut [Interval]) {
        buf.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => Interval::point(c),
                Op::Var(i) => x[i],
                Op::Add(a, b) => buf[a] + buf[b],
                Op::Sub(a, b) => buf[a] - buf[b],
                Op::Mul(a, b) => buf[a] * buf[b],
                Op::Sqr(a) => buf[a].sqr(),
                Op::Neg(a) => -buf[a],
                Op::Scale(a, c) => buf[a] * Interval::point(c),
                Op::DivC(a, c) => buf[a].div_scalar(c),
            };
            buf.push(v);
        }
        for (o, &i) in out.iter_mut().zip(&self.outs) {
            *o = buf[i];
        }
    }
}

/// Normalized Taylor coefficients `f^[0..=order]` of the flow, per dimension.
#[derive(Debug, Clone)]
pub struct JetSeries {
    pub n: usize,
    pub order: usize,
    /// `coef[i * n + d]` encloses component `d` of `f^[i]`.
    pub coef: Vec<Interval>,
}

impl JetSeries {
    pub fn term(&self, i: usize) -> IBox {
        IBox::new(self.coef[i * self.n..(i + 1) * self.n].to_vec())
    }

    #[inline]
    pub fn at(&self, i: usize, d: usize) -> Interval {
        self.coef[i * self.n + d]
    }
}

/// `x' = f(x)` with a polynomial right-hand side.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub n: usize,
    pub vars: Vec<String>,
    pub params: Vec<String>,
    pub param_values: Vec<f64>,
    pub exprs: Vec<Expr>,
    pub jac: Vec<Expr>,
    pub k: usize,
    tape: Tape,
    jac_tape: Tape,
}

impl VectorField {
    pub fn parse(
        vars: &[&str],
        comps: &[&str],
        params: &[(&str, f64)],
        k: usize,
    ) -> Result<VectorField, FieldError> {
        if comps.len() != vars.len() {
            return Err(FieldError::Arity {
                expected: vars.len(),
                got: comps.len(),
            });
        }
        if k < 2 {
            return Err(FieldError::Order(k));
        }
        let var_names: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        let param_names: Vec<String> = params.iter().map(|(s, _)| s.to_string()).collect();
        let mut seen = std::collections::HashSet::new();
        for name in var_names.iter().chain(&param_names) {
            if !seen.insert(name.clone()) {
                return Err(FieldError::Duplicate(name.clone()));
            }
        }
        let exprs = comps
            .iter()
            .map(|c| parse_expr(c, &var_names, &param_names))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_exprs(
            var_names,
            param_names,
            params.iter().map(|p| p.1).collect(),
            exprs,
            k,
        )
    }

    pub fn from_exprs(
        vars: Vec<String>,
        params: Vec<String>,
        param_values: Vec<f64>,
        exprs: Vec<Expr>,
        k: usize,
    ) -> Result<VectorField, FieldError> {
        let n = vars.len();
        let refs: Vec<&Expr> = exprs.iter().collect();
        let tape = Tape::compile(&refs, &param_values)?;
        let mut jac = Vec::with_capacity(n * n);
        for e in &exprs {
            for v in 0..n {
                jac.push(e.derive(v));
            }
        }
        let jrefs: Vec<&Expr> = jac.iter().collect();
        let jac_tape = Tape::compile(&jrefs, &param_values)?;
        Ok(VectorField {
            n,
            vars,
            params,
            param_values,
            exprs,
            jac,
            k,
            tape,
            jac_tape,
        })
    }

    pub fn with_order(&self, k: usize) -> VectorField {
        let mut f = self.clone();
        f.k = k.max(2);
        f
    }

    pub fn names(&self) -> Names<'_> {
        Names {
            vars: &self.vars,
            params: &self.params,
        }
    }

    /// Pretty-printed components; these parse back to the same trees.
    pub fn component_strings(&self) -> Vec<String> {
        let names = self.names();
        self.exprs.iter().map(|e| e.display(&names).to_string()).collect()
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let mut buf = Vec::with_capacity(self.tape.ops.len());
        self.tape.eval_f64(x, &mut buf, out);
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.eval(x, &mut out);
        out
    }

    /// Natural interval extension of `f` over `b`.
    pub fn eval_interval(&self, b: &IBox) -> IBox {
        let mut buf = Vec::with_capacity(self.tape.ops.len());
        let mut out = vec![Interval::ZERO; self.n];
        self.tape.eval_iv(&b.dims, &mut buf, &mut out);
        IBox::new(out)
    }

    pub fn jacobian_point(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.jac_tape.ops.len());
        let mut out = vec![0.0; self.n * self.n];
        self.jac_tape.eval_f64(x, &mut buf, &mut out);
        out
    }

    pub fn jacobian_interval(&self, b: &IBox) -> IMatrix {
        let mut buf = Vec::with_capacity(self.jac_tape.ops.len());
        let mut out = vec![Interval::ZERO; self.n * self.n];
        self.jac_tape.eval_iv(&b.dims, &mut buf, &mut out);
        IMatrix::from_vec(self.n, out)
    }

    /// Enclosures of `f^[0..=order](b)` by interval jet propagation.
    pub fn taylor_jet(&self, b: &IBox, order: usize) -> JetSeries {
        let n = self.n;
        let ops = &self.tape.ops;
        let nk = order + 1;
        let mut x = vec![Interval::ZERO; nk * n];
        x[..n].copy_from_slice(&b.dims);
        let mut node = vec![Interval::ZERO; ops.len() * nk];
        for d in 0..order {
            for (t, op) in ops.iter().enumerate() {
                let v = match *op {
                    Op::Const(c) => {
                        if d == 0 {
                            Interval::point(c)
                        } else {
                            Interval::ZERO
                        }
                    }
                    Op::Var(i) => x[d * n + i],
                    Op::Add(a, b) => node[a * nk + d] + node[b * nk + d],
                    Op::Sub(a, b) => node[a * nk + d] - node[b * nk + d],
                    Op::Neg(a) => -node[a * nk + d],
                    Op::Scale(a, c) => node[a * nk + d] * Interval::point(c),
                    Op::DivC(a, c) => node[a * nk + d].div_scalar(c),
                    Op::Mul(a, b) => {
                        let pa = &node[a * nk..a * nk + d + 1];
                        let pb = &node[b * nk..b * nk + d + 1];
                        let mut s = pa[0] * pb[d];
                        for j in 1..=d {
                            s = s + pa[j] * pb[d - j];
                        }
                        s
                    }
                    Op::Sqr(a) => {
                        let pa = &node[a * nk..a * nk + d + 1];
                        let mut s = Interval::ZERO;
                        for j in 0..(d + 1) / 2 {
                            s = s + pa[j] * pa[d - j];
                        }
                        s = s + s;
                        if d % 2 == 0 {
                            s = s + pa[d / 2].sqr();
                        }
                        s
                    }
                };
                node[t * nk + d] = v;
            }
            let denom = (d + 1) as f64;
            for (i, &o) in self.tape.outs.iter().enumerate() {
                let c = node[o * nk + d];
                x[(d + 1) * n + i] = if d == 0 { c } else { c.div_scalar(denom) };
            }
        }
        JetSeries {
            n,
            order,
            coef: x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eg1() -> VectorField {
        VectorField::parse(&["x", "y"], &["2*x*(1-y)", "-y*(1-x)"], &[], 20).unwrap()
    }

    #[test]
    fn eg1_point_eval() {
        assert_eq!(eg1().eval_vec(&[1.0, 3.0]), vec![-4.0, 0.0]);
    }

    #[test]
    fn eg1_jacobian_symbolic_and_point() {
        let f = eg1();
        let j = f.jacobian_point(&[1.0, 3.0]);
        assert_eq!(j, vec![-4.0, -2.0, 3.0, 0.0]);
        let j2 = f.jacobian_point(&[0.3, 0.7]);
        let want = [2.0 - 2.0 * 0.7, -2.0 * 0.3, 0.7, 0.3 - 1.0];
        for (a, b) in j2.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_fractional_exponent_and_unknown_names() {
        let v = vec!["x".to_string()];
        assert!(matches!(
            parse_expr("x^(1/2)", &v, &[]),
            Err(FieldError::NonIntegerExponent { .. })
        ));
        assert!(matches!(
            parse_expr("x^2.5", &v, &[]),
            Err(FieldError::NonIntegerExponent { .. })
        ));
        assert!(matches!(
            parse_expr("x + z", &v, &[]),
            Err(FieldError::UnknownIdent { pos: 4, .. })
        ));
        assert!(matches!(parse_expr("(x + 1", &v, &[]), Err(FieldError::Syntax { .. })));
        assert!(matches!(parse_expr("x 1", &v, &[]), Err(FieldError::Syntax { .. })));
    }

    #[test]
    fn division_must_be_by_nonzero_constant() {
        assert_eq!(
            VectorField::parse(&["x"], &["1/x"], &[], 5).unwrap_err(),
            FieldError::BadDivisor
        );
        assert_eq!(
            VectorField::parse(&["x"], &["x/(a-a)"], &[("a", 2.0)], 5).unwrap_err(),
            FieldError::BadDivisor
        );
        assert!(VectorField::parse(&["x"], &["x/(2*a)"], &[("a", 2.0)], 5).is_ok());
    }

    #[test]
    fn pretty_print_round_trips() {
        let vars = vec!["x".into(), "y".into(), "z".into()];
        let params = vec!["s".into(), "r".into()];
        let srcs = [
            "s*(y - x)",
            "x*(r - z) - y",
            "-(x - y)^3/3 + -x",
            "2*x*(1-y)",
            "x - x^3/3 - y + 0.5",
            "1e-3*x*--y",
            "x^10*(y^2+1)/(2*s)",
        ];
        for s in srcs {
            let e = parse_expr(s, &vars, &params).unwrap();
            let names = Names {
                vars: &vars,
                params: &params,
            };
            let printed = e.display(&names).to_string();
            let e2 = parse_expr(&printed, &vars, &params).unwrap();
            assert_eq!(e, e2, "{s} -> {printed}");
        }
    }

    #[test]
    fn params_resolve_after_vars() {
        let f = VectorField::parse(&["x"], &["a*x"], &[("a", -2.0)], 4).unwrap();
        assert_eq!(f.eval_vec(&[3.0]), vec![-6.0]);
    }

    #[test]
    fn jet_of_exponential_growth() {
        let f = VectorField::parse(&["x"], &["x"], &[], 20).unwrap();
        let c = 1.7;
        let j = f.taylor_jet(&IBox::point(&[c]), 20);
        let mut fact = 1.0;
        for i in 0..=20 {
            if i > 0 {
                fact *= i as f64;
            }
            let want = c / fact;
            let got = j.at(i, 0);
            assert!(got.contains(want) || (got.mid() - want).abs() <= 1e-15 * want.abs());
            assert!(got.width() <= 1e-12 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn jet_first_term_matches_interval_eval() {
        let f = eg1();
        let b = IBox::centered(&[1.0, 3.0], &[0.1, 0.1]);
        let j = f.taylor_jet(&b, 5);
        assert_eq!(j.term(0), b);
        assert_eq!(j.term(1), f.eval_interval(&b));
    }

    #[test]
    fn interval_eval_contains_samples() {
        let f = eg1();
        let b = IBox::centered(&[1.0, 3.0], &[0.1, 0.1]);
        let e = f.eval_interval(&b);
        for i in 0..=20 {
            for j in 0..=20 {
                let p = [0.9 + 0.01 * i as f64, 2.9 + 0.01 * j as f64];
                assert!(e.contains_point(&f.eval_vec(&p)));
            }
        }
    }

    #[test]
    fn shared_subexpressions_are_reused() {
        let f = VectorField::parse(&["x", "y"], &["x*y + 1", "x*y - 1"], &[], 4).unwrap();
        let muls = f
            .tape
            .ops
            .iter()
            .filter(|o| matches!(o, Op::Mul(..)))
            .count();
        assert_eq!(muls, 1);
    }
}
