//! A small closed-form expression language for coefficient fields.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables are `x1..xd` (plus `x` when d = 1) and, for interaction kernels,
//! `y1..yd` (plus `y`). `r` is the Euclidean norm of x. Named parameters are
//! substituted as constants at parse time; `pi` and `e` are predefined.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
    Sinh,
    Cosh,
    Atan,
    Sign,
    Min,
    Max,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "exp" => (Func::Exp, 1),
            "ln" | "log" => (Func::Ln, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "tanh" => (Func::Tanh, 1),
            "sinh" => (Func::Sinh, 1),
            "cosh" => (Func::Cosh, 1),
            "atan" => (Func::Atan, 1),
            "sign" => (Func::Sign, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "pow" => (Func::Pow, 2),
            _ => return None,
        })
    }
}

/// A compiled expression over a fixed slot layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    /// Euclidean norm of slots `start..start + len`.
    Norm {
        start: usize,
        len: usize,
    },
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Which names resolve to which evaluation slots.
#[derive(Debug, Clone)]
pub struct Scope<'a> {
    pub dim: usize,
    /// Also expose `y` variables (slots `dim..2*dim`).
    pub kernel: bool,
    pub params: &'a BTreeMap<String, f64>,
}

impl<'a> Scope<'a> {
    pub fn new(dim: usize, params: &'a BTreeMap<String, f64>) -> Self {
        Self {
            dim,
            kernel: false,
            params,
        }
    }

    pub fn kernel(dim: usize, params: &'a BTreeMap<String, f64>) -> Self {
        Self {
            dim,
            kernel: true,
            params,
        }
    }

    pub fn slots(&self) -> usize {
        if self.kernel {
            2 * self.dim
        } else {
            self.dim
        }
    }

    fn resolve(&self, name: &str) -> Option<Expr> {
        let d = self.dim;
        if d == 1 && name == "x" {
            return Some(Expr::Var(0));
        }
        if self.kernel && d == 1 && name == "y" {
            return Some(Expr::Var(1));
        }
        if name == "r" {
            return Some(Expr::Norm { start: 0, len: d });
        }
        for (prefix, offset, enabled) in [('x', 0, true), ('y', d, self.kernel)] {
            if !enabled {
                continue;
            }
            if let Some(rest) = name.strip_prefix(prefix) {
                if let Ok(i) = rest.parse::<usize>() {
                    if (1..=d).contains(&i) {
                        return Some(Expr::Var(offset + i - 1));
                    }
                }
            }
        }
        if let Some(&v) = self.params.get(name) {
            return Some(Expr::Const(v));
        }
        match name {
            "pi" => Some(Expr::Const(std::f64::consts::PI)),
            "e" => Some(Expr::Const(std::f64::consts::E)),
            _ => None,
        }
    }
}

impl Expr {
    pub fn parse(src: &str, scope: &Scope<'_>) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            scope,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => v[*i],
            Expr::Norm { start, len } => v[*start..*start + *len].iter().map(|t| t * t).sum::<f64>().sqrt(),
            Expr::Neg(a) => -a.eval(v),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(v), b.eval(v));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => pow(x, y),
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(v);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Ln => x.ln(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Tanh => x.tanh(),
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Atan => x.atan(),
                    Func::Sign => {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => x.min(args[1].eval(v)),
                    Func::Max => x.max(args[1].eval(v)),
                    Func::Pow => pow(x, args[1].eval(v)),
                }
            }
        }
    }

    /// True if any slot in `range` is read.
    pub fn reads_slots(&self, range: std::ops::Range<usize>) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(i) => range.contains(i),
            Expr::Norm { start, len } => (*start..*start + *len).any(|i| range.contains(&i)),
            Expr::Neg(a) => a.reads_slots(range),
            Expr::Bin(_, a, b) => a.reads_slots(range.clone()) || b.reads_slots(range),
            Expr::Call(_, args) => args.iter().any(|a| a.reads_slots(range.clone())),
        }
    }
}

// Integer exponents go through powi so that (-x)^3 stays real.
fn pow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "v{i}"),
            Expr::Norm { start, len } => write!(f, "|v{start}..v{}|", start + len),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{func:?}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Parser<'s, 'p> {
    src: &'s [u8],
    pos: usize,
    scope: &'p Scope<'p>,
}

impl Parser<'_, '_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expression {
            pos: self.pos,
            msg: msg.to_string(),
        }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map(Expr::Const).map_err(|_| Error::Expression {
            pos: start,
            msg: format!("invalid number `{text}`"),
        })
    }

    fn name(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if self.peek() == Some(b'(') {
            let (func, arity) = Func::lookup(name).ok_or_else(|| Error::Expression {
                pos: start,
                msg: format!("unknown function `{name}`"),
            })?;
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            if !self.eat(b')') {
                return Err(self.err("expected `)` after arguments"));
            }
            if args.len() != arity {
                return Err(Error::Expression {
                    pos: start,
                    msg: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        self.scope.resolve(name).ok_or_else(|| Error::Expression {
            pos: start,
            msg: format!("unknown name `{name}`"),
        })
    }
}
