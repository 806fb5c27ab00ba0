//! Conductivity fields: constants or closed-form expressions in the cell
//! coordinates `x`, `y`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Pi,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(x, y),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x, y), b.eval(x, y));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval(x, y);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                }
            }
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

/// Fully parenthesized rendering that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::X => f.write_str("x"),
            Expr::Y => f.write_str("y"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

// Grammar, loosest first:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | ident | ident '(' args ')' | '(' expr ')'
struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
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
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
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
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if self.peek() == Some(b'(') {
            let func = Func::lookup(name).ok_or_else(|| Error::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            })?;
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(b')') {
                loop {
                    args.push(self.expr()?);
                    if self.eat(b',') {
                        continue;
                    }
                    if !self.eat(b')') {
                        return Err(self.error("expected `,` or `)`"));
                    }
                    break;
                }
            }
            if args.len() != 1 {
                return Err(Error::Arity {
                    name: name.to_string(),
                    expected: 1,
                    found: args.len(),
                });
            }
            return Ok(Expr::Call(func, Box::new(args.pop().expect("one argument"))));
        }
        match name {
            "x" => Ok(Expr::X),
            "y" => Ok(Expr::Y),
            "pi" => Ok(Expr::Pi),
            _ => Err(Error::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            }),
        }
    }
}

/// A scalar conductivity over the unit cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientField {
    Constant(f64),
    Expression { source: String, expr: Expr },
}

impl CoefficientField {
    pub fn constant(value: f64) -> Self {
        CoefficientField::Constant(value)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let expr = Expr::parse(text)?;
        Ok(match expr {
            Expr::Num(v) => CoefficientField::Constant(v),
            expr => CoefficientField::Expression {
                source: text.trim().to_string(),
                expr,
            },
        })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefficientField::Constant(_))
    }

    /// Value at a point; non-finite results are reported as errors.
    pub fn eval(&self, p: Vec2) -> Result<f64> {
        let v = self.eval_unchecked(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                x: p.x,
                y: p.y,
                message: format!("conductivity evaluates to {v}"),
            })
        }
    }

    pub fn eval_unchecked(&self, p: Vec2) -> f64 {
        match self {
            CoefficientField::Constant(v) => *v,
            CoefficientField::Expression { expr, .. } => expr.eval(p.x, p.y),
        }
    }

    /// Probes the field on a 256 x 256 grid over the closed unit square.
    pub fn verify_bounds(&self, lower: f64, upper: f64) -> BoundsReport {
        const GRID: usize = 256;
        let mut report = BoundsReport {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            argmin: [0.0; 2],
            argmax: [0.0; 2],
            lower,
            upper,
            non_finite: None,
        };
        for i in 0..GRID {
            for j in 0..GRID {
                let x = i as f64 / (GRID - 1) as f64;
                let y = j as f64 / (GRID - 1) as f64;
                let v = self.eval_unchecked(Vec2::new(x, y));
                if !v.is_finite() {
                    report.non_finite.get_or_insert([x, y]);
                    continue;
                }
                if v < report.min {
                    report.min = v;
                    report.argmin = [x, y];
                }
                if v > report.max {
                    report.max = v;
                    report.argmax = [x, y];
                }
            }
        }
        report
    }
}

impl fmt::Display for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Constant(v) => write!(f, "{v:?}"),
            CoefficientField::Expression { source, .. } => f.write_str(source),
        }
    }
}

impl Serialize for CoefficientField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CoefficientField::Constant(v) => s.serialize_f64(*v),
            CoefficientField::Expression { source, .. } => s.serialize_str(source),
        }
    }
}

impl<'de> Deserialize<'de> for CoefficientField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(CoefficientField::Constant(v)),
            Raw::Text(t) => CoefficientField::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub min: f64,
    pub max: f64,
    pub argmin: [f64; 2],
    pub argmax: [f64; 2],
    pub lower: f64,
    pub upper: f64,
    pub non_finite: Option<[f64; 2]>,
}

impl BoundsReport {
    pub fn is_ok(&self) -> bool {
        self.non_finite.is_none() && self.min >= self.lower && self.max <= self.upper
    }

    /// Nonpositive or non-finite values break ellipticity outright.
    pub fn is_fatal(&self) -> bool {
        self.non_finite.is_some() || self.min <= 0.0
    }
}

/// Matrix (`sigma1`) and inclusion (`sigma2`) conductivities. The perforated
/// case has no inclusion material.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPair {
    pub matrix: CoefficientField,
    pub inclusion: Option<CoefficientField>,
}

impl SigmaPair {
    pub fn mixture(matrix: CoefficientField, inclusion: CoefficientField) -> Self {
        Self {
            matrix,
            inclusion: Some(inclusion),
        }
    }

    pub fn constants(sigma1: f64, sigma2: f64) -> Self {
        Self::mixture(
            CoefficientField::Constant(sigma1),
            CoefficientField::Constant(sigma2),
        )
    }

    pub fn perforated(matrix: CoefficientField) -> Self {
        Self {
            matrix,
            inclusion: None,
        }
    }

    /// Checks both fields on the probe grid. Values outside `[lower, upper]`
    /// are logged; nonpositive values are an error.
    pub fn check(&self, lower: f64, upper: f64) -> Result<()> {
        let fields = std::iter::once(("sigma1", &self.matrix))
            .chain(self.inclusion.iter().map(|f| ("sigma2", f)));
        for (name, field) in fields {
            let report = field.verify_bounds(lower, upper);
            if report.is_fatal() {
                let [x, y] = report.non_finite.unwrap_or(report.argmin);
                return Err(Error::Evaluation {
                    x,
                    y,
                    message: format!("{name} is not positive (min {})", report.min),
                });
            }
            if !report.is_ok() {
                log::warn!(
                    "{name} leaves [{lower}, {upper}]: min {} at {:?}, max {} at {:?}",
                    report.min,
                    report.argmin,
                    report.max,
                    report.argmax
                );
            }
        }
        Ok(())
    }
}
