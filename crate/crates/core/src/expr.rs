//! A small arithmetic expression language for problem callables.
//!
//! Identifiers: `t`, `s`, `u`, `x1`, `x2`, `x3`. Operators: `+ - * / ^`
//! (`^` is right associative and binds tighter than unary minus).
//! Functions: `exp`, `sin`, `cos`, `ln`. Numbers use the usual decimal and
//! exponent notation.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    S,
    U,
    X1,
    X2,
    X3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Sin,
    Cos,
    Ln,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Variable bindings for evaluation; unset variables are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub t: f64,
    pub s: f64,
    pub u: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

/// A parsed expression.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
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

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!("unexpected {:?} in {src:?}", p.tokens[p.pos])));
        }
        Ok(Self { source: src.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, env: &Env) -> f64 {
        eval(&self.root, env)
    }

    /// Whether the expression mentions `v`.
    pub fn uses(&self, v: Var) -> bool {
        fn walk(n: &Node, v: Var) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(w) => *w == v,
                Node::Neg(a) | Node::Call(_, a) => walk(a, v),
                Node::Bin(_, a, b) => walk(a, v) || walk(b, v),
            }
        }
        walk(&self.root, v)
    }

    /// True for the literal constant zero.
    pub fn is_zero(&self) -> bool {
        self.root == Node::Num(0.0)
    }

    /// Rejects identifiers outside `allowed`.
    pub fn restrict(self, allowed: &[Var]) -> Result<Self> {
        for v in [Var::T, Var::S, Var::U, Var::X1, Var::X2, Var::X3] {
            if self.uses(v) && !allowed.contains(&v) {
                return Err(Error::Parse(format!("identifier {v:?} is not available in {:?}", self.source)));
            }
        }
        Ok(self)
    }
}

fn eval(n: &Node, e: &Env) -> f64 {
    match n {
        Node::Num(x) => *x,
        Node::Var(v) => match v {
            Var::T => e.t,
            Var::S => e.s,
            Var::U => e.u,
            Var::X1 => e.x1,
            Var::X2 => e.x2,
            Var::X3 => e.x3,
        },
        Node::Neg(a) => -eval(a, e),
        Node::Call(f, a) => {
            let x = eval(a, e);
            match f {
                Func::Exp => x.exp(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Ln => x.ln(),
            }
        }
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, e), eval(b, e));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Pow => {
                    if y == y.trunc() && y.abs() <= 64.0 {
                        x.powi(y as i32)
                    } else {
                        x.powf(y)
                    }
                }
            }
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

fn tokenize(src: &str) -> Result<Vec<Tok>> {
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
            let v = text.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {text:?} in {src:?}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character {c:?} in {src:?}")));
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty expression".into()));
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

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(Error::Parse("missing closing parenthesis".into())),
                }
            }
            Some(Tok::Ident(name)) => {
                let var = match name.as_str() {
                    "t" => Some(Var::T),
                    "s" => Some(Var::S),
                    "u" => Some(Var::U),
                    "x1" => Some(Var::X1),
                    "x2" => Some(Var::X2),
                    "x3" => Some(Var::X3),
                    _ => None,
                };
                if let Some(v) = var {
                    return Ok(Node::Var(v));
                }
                let func = match name.as_str() {
                    "exp" => Func::Exp,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "ln" => Func::Ln,
                    _ => return Err(Error::Parse(format!("unknown identifier {name:?}"))),
                };
                match self.next() {
                    Some(Tok::LParen) => {}
                    _ => return Err(Error::Parse(format!("{name} must be followed by '('"))),
                }
                let arg = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(Node::Call(func, Box::new(arg))),
                    _ => Err(Error::Parse(format!("missing ')' after {name} argument"))),
                }
            }
            Some(tok) => Err(Error::Parse(format!("unexpected {tok:?}"))),
            None => Err(Error::Parse("unexpected end of expression".into())),
        }
    }
}
