//! Arithmetic expressions over parent variables `X1..Xd` and the node noise `U`.
//!
//! Grammar: numbers, `X<k>` (1-based), `U`, `+ - * /` (also `− × ÷`), `^`,
//! unary minus, parentheses, and the functions `log abs exp sqrt sin cos tanh`.

use std::collections::BTreeSet;
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
    Log,
    Abs,
    Exp,
    Sqrt,
    Sin,
    Cos,
    Tanh,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "log" | "ln" => Func::Log,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Log => x.ln(),
            Func::Abs => x.abs(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// 0-based variable index.
    Var(usize),
    Noise,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { src, tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], u: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Noise => u,
            Expr::Neg(a) => -a.eval(x, u),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, u), b.eval(x, u));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(x, u)),
        }
    }

    /// Variable indices referenced.
    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                out.insert(*i);
            }
        });
        out
    }

    pub fn noise_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if matches!(e, Expr::Noise) {
                n += 1;
            }
        });
        n
    }

    /// `f(parents) + U` or `U + f(parents)` with `U` absent from `f`.
    pub fn is_additive_in_noise(&self) -> bool {
        match self {
            Expr::Noise => true,
            Expr::Bin(BinOp::Add, a, b) => {
                (a.is_additive_in_noise() && b.noise_count() == 0) || (b.is_additive_in_noise() && a.noise_count() == 0)
            }
            Expr::Bin(BinOp::Sub, a, b) => a.is_additive_in_noise() && b.noise_count() == 0,
            _ => false,
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(a) | Expr::Call(_, a) => a.visit(f),
            Expr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }
}

/// Integer powers keep the sign of negative bases.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn prec(op: BinOp) -> u8 {
    match op {
        BinOp::Add | BinOp::Sub => 1,
        BinOp::Mul | BinOp::Div => 2,
        BinOp::Pow => 3,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let needs = match e {
                Expr::Bin(op, ..) => prec(*op) < min,
                Expr::Neg(_) => min > 1,
                Expr::Num(v) => *v < 0.0,
                _ => false,
            };
            if needs {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "X{}", i + 1),
            Expr::Noise => write!(f, "U"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(a, 3, f)
            }
            Expr::Bin(op, a, b) => {
                let p = prec(*op);
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    wrap(a, p + 1, f)?;
                    write!(f, "{sym}")?;
                    wrap(b, p, f)
                } else {
                    wrap(a, p, f)?;
                    write!(f, "{sym}")?;
                    wrap(b, p + 1, f)
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (at, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().map(|c| c.1).collect();
                let v = text.parse::<f64>().map_err(|_| Error::Parse {
                    location: format!("{src:?} at {at}"),
                    message: format!("bad number {text}"),
                })?;
                out.push((at, Tok::Num(v)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                out.push((at, Tok::Ident(chars[start..i].iter().map(|c| c.1).collect())));
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push((at, Tok::Op(c)));
                i += 1;
            }
            '−' => {
                out.push((at, Tok::Op('-')));
                i += 1;
            }
            '×' | '·' => {
                out.push((at, Tok::Op('*')));
                i += 1;
            }
            '÷' => {
                out.push((at, Tok::Op('/')));
                i += 1;
            }
            '(' => {
                out.push((at, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((at, Tok::RParen));
                i += 1;
            }
            other => {
                return Err(Error::Parse {
                    location: format!("{src:?} at {at}"),
                    message: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        let at = self.tokens.get(self.pos).map(|t| t.0).unwrap_or(self.src.len());
        Error::Parse { location: format!("{:?} at {at}", self.src), message: message.to_string() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Tok::Op(c)) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op(&['+']).is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek().cloned() else { return Err(self.error("unexpected end of expression")) };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "U" {
                    self.pos += 1;
                    return Ok(Expr::Noise);
                }
                if let Some(rest) = name.strip_prefix('X') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k == 0 {
                            return Err(self.error("variables are numbered from X1"));
                        }
                        self.pos += 1;
                        return Ok(Expr::Var(k - 1));
                    }
                }
                if let Some(f) = Func::from_name(&name) {
                    self.pos += 1;
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(self.error("expected '(' after function name"));
                    }
                    let arg = self.atom()?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                Err(self.error(&format!("unknown identifier {name}")))
            }
            _ => Err(self.error("expected a value")),
        }
    }
}
