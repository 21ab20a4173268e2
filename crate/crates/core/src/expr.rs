//! Scalar expressions in `(t, x1, x2, x3)` with exact time derivatives.
//!
//! Grammar: `+ - * / ^`, parentheses, unary minus, numbers, the constant
//! `pi`, and the functions `sin cos exp sqrt abs min max`. Evaluation runs on
//! forward-mode dual numbers so `d/dt` comes out alongside the value.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn cst(v: f64) -> Dual {
        Dual { v, d: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    T,
    X(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn parse(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, t: Dual, x: &[f64; 3]) -> Dual {
        match self {
            Node::Num(v) => Dual::cst(*v),
            Node::Var(Var::T) => t,
            Node::Var(Var::X(i)) => Dual::cst(x[*i]),
            Node::Neg(a) => {
                let a = a.eval(t, x);
                Dual { v: -a.v, d: -a.d }
            }
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                match op {
                    '+' => Dual { v: a.v + b.v, d: a.d + b.d },
                    '-' => Dual { v: a.v - b.v, d: a.d - b.d },
                    '*' => Dual { v: a.v * b.v, d: a.d * b.v + a.v * b.d },
                    '/' => Dual { v: a.v / b.v, d: (a.d * b.v - a.v * b.d) / (b.v * b.v) },
                    _ => pow(a, b),
                }
            }
            Node::Call(f, args) => {
                let a = args[0].eval(t, x);
                match f {
                    Func::Sin => Dual { v: a.v.sin(), d: a.d * a.v.cos() },
                    Func::Cos => Dual { v: a.v.cos(), d: -a.d * a.v.sin() },
                    Func::Exp => {
                        let e = a.v.exp();
                        Dual { v: e, d: a.d * e }
                    }
                    Func::Sqrt => {
                        let s = a.v.sqrt();
                        Dual { v: s, d: if a.d == 0.0 { 0.0 } else { a.d / (2.0 * s) } }
                    }
                    Func::Abs => {
                        // right derivative at the kink, matching the right-continuous rate convention
                        let sgn = if a.v > 0.0 || (a.v == 0.0 && a.d >= 0.0) { 1.0 } else { -1.0 };
                        Dual { v: a.v.abs(), d: sgn * a.d }
                    }
                    Func::Min | Func::Max => {
                        let b = args[1].eval(t, x);
                        let pick_a = match f {
                            Func::Min => a.v < b.v || (a.v == b.v && a.d <= b.d),
                            _ => a.v > b.v || (a.v == b.v && a.d >= b.d),
                        };
                        if pick_a {
                            a
                        } else {
                            b
                        }
                    }
                }
            }
        }
    }

    fn uses_t(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(v) => *v == Var::T,
            Node::Neg(a) => a.uses_t(),
            Node::Bin(_, a, b) => a.uses_t() || b.uses_t(),
            Node::Call(_, args) => args.iter().any(Node::uses_t),
        }
    }

    fn uses_x(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(v) => matches!(v, Var::X(_)),
            Node::Neg(a) => a.uses_x(),
            Node::Bin(_, a, b) => a.uses_x() || b.uses_x(),
            Node::Call(_, args) => args.iter().any(Node::uses_x),
        }
    }
}

fn pow(a: Dual, b: Dual) -> Dual {
    let v = a.v.powf(b.v);
    let d = if b.d == 0.0 {
        if a.d == 0.0 {
            0.0
        } else {
            b.v * a.v.powf(b.v - 1.0) * a.d
        }
    } else {
        v * (b.d * a.v.ln() + b.v * a.d / a.v)
    };
    Dual { v, d }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}' in '{src}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character '{c}' in '{src}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} in expression '{}'", self.src))
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                '+'
            } else if self.eat('-') {
                '-'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                '*'
            } else if self.eat('/') {
                '/'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(match self.unary()? {
                Node::Num(v) => Node::Num(-v),
                inner => Node::Neg(Box::new(inner)),
            });
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("missing ')'"));
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "t" => return Ok(Node::Var(Var::T)),
                    "x1" => return Ok(Node::Var(Var::X(0))),
                    "x2" => return Ok(Node::Var(Var::X(1))),
                    "x3" => return Ok(Node::Var(Var::X(2))),
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    _ => {}
                }
                let (f, arity) =
                    Func::parse(&name).ok_or_else(|| self.err(&format!("unknown name '{name}'")))?;
                if !self.eat('(') {
                    return Err(self.err(&format!("expected '(' after {name}")));
                }
                let mut args = vec![self.expr()?];
                while self.eat(',') {
                    args.push(self.expr()?);
                }
                if !self.eat(')') {
                    return Err(self.err("missing ')'"));
                }
                if args.len() != arity {
                    return Err(self.err(&format!("{name} takes {arity} argument(s), got {}", args.len())));
                }
                Ok(Node::Call(f, args))
            }
            Some(Tok::Op(c)) => Err(self.err(&format!("unexpected '{c}'"))),
            None => Err(self.err("unexpected end")),
        }
    }
}

/// A parsed expression; keeps its source text for round-tripping.
#[derive(Debug, Clone)]
pub struct Expr {
    src: String,
    node: Node,
}

impl PartialEq for Expr {
    fn eq(&self, o: &Expr) -> bool {
        self.node == o.node
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let toks = lex(src)?;
        if toks.is_empty() {
            return Err(Error::Parse("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0, src };
        let node = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(Expr { src: src.trim().to_string(), node })
    }

    pub fn constant(v: f64) -> Expr {
        Expr { src: format!("{v:?}"), node: Node::Num(v) }
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn eval(&self, t: f64, x: [f64; 3]) -> f64 {
        self.node.eval(Dual::cst(t), &x).v
    }

    /// Value and `∂/∂t` at `(t, x)`.
    pub fn eval_dt(&self, t: f64, x: [f64; 3]) -> (f64, f64) {
        let r = self.node.eval(Dual { v: t, d: 1.0 }, &x);
        (r.v, r.d)
    }

    pub fn depends_on_t(&self) -> bool {
        self.node.uses_t()
    }

    pub fn depends_on_x(&self) -> bool {
        self.node.uses_x()
    }

    /// `Some(v)` when the expression is a bare number.
    pub fn as_number(&self) -> Option<f64> {
        match self.node {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.src)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Expr::constant(v)),
            Raw::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, t: f64, x: [f64; 3]) -> f64 {
        Expr::parse(s).unwrap().eval(t, x)
    }

    #[test]
    fn precedence_and_associativity() {
        let x = [0.0; 3];
        assert_eq!(ev("1 + 2 * 3", 0.0, x), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, x), 9.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, x), 1.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, x), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0, x), -4.0);
        assert_eq!(ev("1 - -1", 0.0, x), 2.0);
        assert_eq!(ev("1.5e-1 * 2", 0.0, x), 0.3);
    }

    #[test]
    fn variables_and_functions() {
        let x = [0.5, 2.0, -1.0];
        assert_eq!(ev("x1 + x2 * x3", 0.0, x), -1.5);
        assert_eq!(ev("min(x1, x3) + max(t, x2)", 3.0, x), 2.0);
        assert_eq!(ev("abs(x3) + sqrt(4)", 0.0, x), 3.0);
        assert!((ev("sin(pi / 2) + cos(0) + exp(0)", 0.0, x) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_input_is_rejected() {
        for s in ["", "1 +", "foo(1)", "sin 1", "min(1)", "(1", "1 2", "x4", "3 $ 4"] {
            assert!(Expr::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn derivative_of_kink_uses_right_slope() {
        let e = Expr::parse("1.5 - 0.4 * abs(t - 0.5)").unwrap();
        assert_eq!(e.eval_dt(0.25, [0.0; 3]).1, 0.4);
        assert_eq!(e.eval_dt(0.5, [0.0; 3]).1, -0.4);
        assert_eq!(e.eval_dt(0.75, [0.0; 3]).1, -0.4);
    }

    #[test]
    fn dependency_flags() {
        let e = Expr::parse("1 + x1").unwrap();
        assert!(!e.depends_on_t() && e.depends_on_x());
        assert_eq!(Expr::parse("2.5").unwrap().as_number(), Some(2.5));
    }

    #[test]
    fn serde_accepts_numbers_and_strings() {
        #[derive(Deserialize, Serialize)]
        struct W {
            a: Expr,
            b: Expr,
        }
        let w: W = toml::from_str("a = 1.25\nb = \"sin(t)\"").unwrap();
        assert_eq!(w.a.eval(0.0, [0.0; 3]), 1.25);
        let back: W = toml::from_str(&toml::to_string(&w).unwrap()).unwrap();
        assert_eq!(back.b, w.b);
    }

    proptest! {
        #[test]
        fn dual_derivative_matches_central_difference(t in 0.1f64..2.0, x in -1.0f64..1.0) {
            let e = Expr::parse("exp(-t) * sin(2*t + x1) + t^2 / (1 + t) + sqrt(1 + t*t) * cos(x1)").unwrap();
            let p = [x, 0.0, 0.0];
            let (_, d) = e.eval_dt(t, p);
            let h = 1e-5;
            let fd = (e.eval(t + h, p) - e.eval(t - h, p)) / (2.0 * h);
            prop_assert!((d - fd).abs() < 1e-8);
        }
    }
}
