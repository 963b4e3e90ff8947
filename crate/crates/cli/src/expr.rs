//! A small arithmetic grammar for potentials `V(q)` and frequencies `omega(t)`.
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'pi' | 'e' | variable | function '(' sum ')' | '(' sum ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-q^2` is `-(q^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "sqrt" => Self::Sqrt,
            "log" => Self::Log,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Sqrt => "sqrt",
            Self::Log => "log",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    E,
    Var,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression in one free variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    variable: String,
}

impl Expression {
    pub fn variable(&self) -> &str {
        &self.variable
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, x: f64) -> Result<f64, ExprError> {
        eval(&self.root, x)
    }

    /// Symbolic derivative with respect to the free variable.
    pub fn derivative(&self) -> Expression {
        Expression { root: simplify(derive(&self.root)), variable: self.variable.clone() }
    }

    /// True when the expression does not mention its variable.
    pub fn is_constant(&self) -> bool {
        !mentions_var(&self.root)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.variable, 0)
    }
}

pub fn parse_expression(text: &str, variable: &str) -> Result<Expression, ExprError> {
    let mut parser = Parser { src: text, pos: 0, variable };
    parser.skip_ws();
    if parser.pos == text.len() {
        return Err(ExprError::Syntax { offset: 0, message: "empty expression".into() });
    }
    let root = parser.sum()?;
    parser.skip_ws();
    if parser.pos != text.len() {
        return Err(parser.error(format!("unexpected `{}`", parser.peek_char().unwrap_or(' '))));
    }
    Ok(Expression { root, variable: variable.to_string() })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    variable: &'a str,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax { offset: self.pos, message: message.into() }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_char() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek_char() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.eat('^') {
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek_char() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                while matches!(self.peek_char(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if name == self.variable {
                    return Ok(Node::Var);
                }
                match name {
                    "pi" => return Ok(Node::Pi),
                    "e" => return Ok(Node::E),
                    _ => {}
                }
                let Some(func) = Func::from_name(name) else {
                    return Err(ExprError::UnknownIdentifier { name: name.to_string(), offset: start });
                };
                if !self.eat('(') {
                    return Err(self.error(format!("expected `(` after `{name}`")));
                }
                let arg = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut k = p + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                digits(&mut k);
                p = k;
            }
        }
        let text = &self.src[start..p];
        let value: f64 = text
            .parse()
            .map_err(|_| ExprError::Syntax { offset: start, message: format!("malformed number `{text}`") })?;
        self.pos = p;
        Ok(Node::Num(value))
    }
}

fn finite(value: f64, what: &str) -> Result<f64, ExprError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ExprError::Domain(format!("{what} is not finite")))
    }
}

fn eval(node: &Node, x: f64) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Num(v) => *v,
        Node::Pi => std::f64::consts::PI,
        Node::E => std::f64::consts::E,
        Node::Var => x,
        Node::Neg(a) => -eval(a, x)?,
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x)?, eval(b, x)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(ExprError::Domain("division by zero".into()));
                    }
                    a / b
                }
                BinOp::Pow => finite(a.powf(b), "power")?,
            }
        }
        Node::Call(func, a) => {
            let a = eval(a, x)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => finite(a.exp(), "exp")?,
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(ExprError::Domain(format!("sqrt of negative value {a}")));
                    }
                    a.sqrt()
                }
                Func::Log => {
                    if a <= 0.0 {
                        return Err(ExprError::Domain(format!("log of non-positive value {a}")));
                    }
                    a.ln()
                }
            }
        }
    })
}

fn mentions_var(node: &Node) -> bool {
    match node {
        Node::Var => true,
        Node::Num(_) | Node::Pi | Node::E => false,
        Node::Neg(a) | Node::Call(_, a) => mentions_var(a),
        Node::Bin(_, a, b) => mentions_var(a) || mentions_var(b),
    }
}

fn bin(op: BinOp, a: Node, b: Node) -> Node {
    Node::Bin(op, Box::new(a), Box::new(b))
}

fn derive(node: &Node) -> Node {
    use BinOp::*;
    match node {
        Node::Num(_) | Node::Pi | Node::E => Node::Num(0.0),
        Node::Var => Node::Num(1.0),
        Node::Neg(a) => Node::Neg(Box::new(derive(a))),
        Node::Bin(op, a, b) => {
            let (da, db) = (derive(a), derive(b));
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                Add => bin(Add, da, db),
                Sub => bin(Sub, da, db),
                Mul => bin(Add, bin(Mul, da, b), bin(Mul, a, db)),
                Div => bin(Div, bin(Sub, bin(Mul, da, b.clone()), bin(Mul, a, db)), bin(Pow, b, Node::Num(2.0))),
                Pow if !mentions_var(&b) => {
                    // b a^(b - 1) a'
                    bin(Mul, bin(Mul, b.clone(), bin(Pow, a, bin(Sub, b, Node::Num(1.0)))), da)
                }
                Pow => {
                    // a^b (b' log a + b a'/a)
                    let log_a = Node::Call(Func::Log, Box::new(a.clone()));
                    let inner = bin(Add, bin(Mul, db, log_a), bin(Div, bin(Mul, b.clone(), da), a.clone()));
                    bin(Mul, bin(Pow, a, b), inner)
                }
            }
        }
        Node::Call(func, a) => {
            let da = derive(a);
            let a = (**a).clone();
            let outer = match func {
                Func::Sin => Node::Call(Func::Cos, Box::new(a)),
                Func::Cos => Node::Neg(Box::new(Node::Call(Func::Sin, Box::new(a)))),
                Func::Exp => Node::Call(Func::Exp, Box::new(a)),
                Func::Sqrt => bin(Div, Node::Num(0.5), Node::Call(Func::Sqrt, Box::new(a))),
                Func::Log => bin(Div, Node::Num(1.0), a),
            };
            bin(Mul, outer, da)
        }
    }
}

fn simplify(node: Node) -> Node {
    use BinOp::*;
    match node {
        Node::Neg(a) => match simplify(*a) {
            Node::Num(v) => Node::Num(-v),
            Node::Neg(inner) => *inner,
            other => Node::Neg(Box::new(other)),
        },
        Node::Call(f, a) => Node::Call(f, Box::new(simplify(*a))),
        Node::Bin(op, a, b) => {
            let (a, b) = (simplify(*a), simplify(*b));
            let zero = |n: &Node| matches!(n, Node::Num(v) if *v == 0.0);
            let one = |n: &Node| matches!(n, Node::Num(v) if *v == 1.0);
            match (op, &a, &b) {
                (Add | Sub | Mul | Div | Pow, Node::Num(x), Node::Num(y)) => {
                    let folded = match op {
                        Add => x + y,
                        Sub => x - y,
                        Mul => x * y,
                        Div => x / y,
                        Pow => x.powf(*y),
                    };
                    if folded.is_finite() {
                        Node::Num(folded)
                    } else {
                        Node::Bin(op, Box::new(a), Box::new(b))
                    }
                }
                (Add, _, _) if zero(&a) => b,
                (Add | Sub, _, _) if zero(&b) => a,
                (Sub, _, _) if zero(&a) => simplify(Node::Neg(Box::new(b))),
                (Mul, _, _) if zero(&a) || zero(&b) => Node::Num(0.0),
                (Mul, _, _) if one(&a) => b,
                (Mul | Div | Pow, _, _) if one(&b) => a,
                (Div, _, _) if zero(&a) => Node::Num(0.0),
                (Pow, _, _) if zero(&b) => Node::Num(1.0),
                _ => Node::Bin(op, Box::new(a), Box::new(b)),
            }
        }
        other => other,
    }
}

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Bin(BinOp::Pow, ..) => 4,
        Node::Num(v) if *v < 0.0 => 3,
        _ => 5,
    }
}

/// Prints with the minimum parentheses needed to re-parse to the same tree.
fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, var: &str, parent: u8) -> fmt::Result {
    let own = precedence(node);
    let wrap = own < parent;
    if wrap {
        f.write_str("(")?;
    }
    match node {
        Node::Num(v) => write!(f, "{v:?}")?,
        Node::Pi => f.write_str("pi")?,
        Node::E => f.write_str("e")?,
        Node::Var => f.write_str(var)?,
        Node::Neg(a) => {
            f.write_str("-")?;
            write_node(f, a, var, 3)?;
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, var, 0)?;
            f.write_str(")")?;
        }
        Node::Bin(op, a, b) => {
            let (sym, left, right) = match op {
                BinOp::Add => (" + ", 1, 2),
                BinOp::Sub => (" - ", 1, 2),
                BinOp::Mul => (" * ", 2, 3),
                BinOp::Div => (" / ", 2, 3),
                BinOp::Pow => ("^", 5, 3),
            };
            write_node(f, a, var, left)?;
            f.write_str(sym)?;
            write_node(f, b, var, right)?;
        }
    }
    if wrap {
        f.write_str(")")?;
    }
    Ok(())
}
