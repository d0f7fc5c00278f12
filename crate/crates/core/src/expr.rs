//! A small arithmetic expression language for tilt functions.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | var | const | func '(' expr (',' expr)* ')' | '(' expr ')'
//! var    := x | theta | theta1 | theta2 | θ | θ₁ | θ₂
//! const  := pi | e
//! func   := ln | log | exp | sqrt | pow
//! ```
//!
//! `theta` and `theta1` name the same coordinate. Expressions are parsed once
//! and evaluated by walking the tree.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vars {
    pub x: f64,
    pub theta: [f64; 2],
}

impl Vars {
    pub fn at_x(x: f64) -> Self {
        Vars { x, theta: [f64::NAN; 2] }
    }

    pub fn at_theta(theta: [f64; 2]) -> Self {
        Vars { x: f64::NAN, theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Ln,
    Exp,
    Sqrt,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Theta(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, v: &Vars) -> f64 {
        match self {
            Node::Num(c) => *c,
            Node::X => v.x,
            Node::Theta(i) => v.theta[*i],
            Node::Neg(a) => -a.eval(v),
            Node::Add(a, b) => a.eval(v) + b.eval(v),
            Node::Sub(a, b) => a.eval(v) - b.eval(v),
            Node::Mul(a, b) => a.eval(v) * b.eval(v),
            Node::Div(a, b) => a.eval(v) / b.eval(v),
            Node::Pow(a, b) => a.eval(v).powf(b.eval(v)),
            Node::Call(f, args) => match f {
                Func::Ln => args[0].eval(v).ln(),
                Func::Exp => args[0].eval(v).exp(),
                Func::Sqrt => args[0].eval(v).sqrt(),
                Func::Pow => args[0].eval(v).powf(args[1].eval(v)),
            },
        }
    }

    fn uses(&self, pred: &dyn Fn(&Node) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Node::Num(_) | Node::X | Node::Theta(_) => false,
            Node::Neg(a) => a.uses(pred),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.uses(pred) || b.uses(pred)
            }
            Node::Call(_, args) => args.iter().any(|a| a.uses(pred)),
        }
    }
}

/// A parsed expression together with its source text.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in '{src}' at token {}",
                p.pos
            )));
        }
        Ok(Expr { source: src.trim().to_string(), root })
    }

    pub fn constant(c: f64) -> Self {
        Expr { source: fmt_num(c), root: Node::Num(c) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &Vars) -> f64 {
        self.root.eval(vars)
    }

    pub fn eval_x(&self, x: f64) -> f64 {
        self.root.eval(&Vars::at_x(x))
    }

    pub fn eval_theta(&self, theta: [f64; 2]) -> f64 {
        self.root.eval(&Vars::at_theta(theta))
    }

    pub fn uses_x(&self) -> bool {
        self.root.uses(&|n| matches!(n, Node::X))
    }

    /// Largest theta coordinate referenced, plus one.
    pub fn theta_dim(&self) -> usize {
        if self.root.uses(&|n| matches!(n, Node::Theta(1))) {
            2
        } else if self.root.uses(&|n| matches!(n, Node::Theta(0))) {
            1
        } else {
            0
        }
    }

    /// Returns the constant value when the expression is a bare number.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(c) => Some(c),
            _ => None,
        }
    }

    fn compose(op: &str, a: &Expr, b: &Expr, node: Node) -> Expr {
        Expr { source: format!("({}) {op} ({})", a.source, b.source), root: node }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        Self::compose("+", self, other, Node::Add(Box::new(self.root.clone()), Box::new(other.root.clone())))
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        Self::compose("*", self, other, Node::Mul(Box::new(self.root.clone()), Box::new(other.root.clone())))
    }

    pub fn div(&self, other: &Expr) -> Expr {
        Self::compose("/", self, other, Node::Div(Box::new(self.root.clone()), Box::new(other.root.clone())))
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::constant(c).mul(self)
    }

    pub fn recip(&self) -> Expr {
        Expr::constant(1.0).div(self)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
            Raw::Num(c) => Ok(Expr::constant(c)),
        }
    }
}

/// Formats a number so that parsing it back yields the same f64.
pub fn fmt_num(c: f64) -> String {
    let s = format!("{c:?}");
    if c < 0.0 {
        format!("({s})")
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
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
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number '{text}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || ('₀'..='₉').contains(&chars[i]))
            {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            let tok = match c {
                '+' | '*' | '/' | '^' => Tok::Op(c),
                '-' | '−' => Tok::Op('-'),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(Error::Expression(format!("unexpected character '{c}' in '{src}'"))),
            };
            out.push(tok);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::Expression("empty expression".into()));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(Error::Expression(format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Node::Num(c) => Node::Num(-c),
                other => Node::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    self.pos += 1;
                    let func = match name.as_str() {
                        "ln" | "log" => Func::Ln,
                        "exp" => Func::Exp,
                        "sqrt" => Func::Sqrt,
                        "pow" => Func::Pow,
                        _ => return Err(Error::Expression(format!("unknown function '{name}'"))),
                    };
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    let arity = if func == Func::Pow { 2 } else { 1 };
                    if args.len() != arity {
                        return Err(Error::Expression(format!(
                            "'{name}' takes {arity} argument(s), got {}",
                            args.len()
                        )));
                    }
                    return Ok(Node::Call(func, args));
                }
                match name.as_str() {
                    "x" => Ok(Node::X),
                    "theta" | "theta1" | "θ" | "θ₁" => Ok(Node::Theta(0)),
                    "theta2" | "θ₂" => Ok(Node::Theta(1)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expression(format!("unknown variable '{name}'"))),
                }
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }
}
