//! A small arithmetic expression language for potentials.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'i' | 'x' | 'pi' | name | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^(3^2)`. `i` is the imaginary unit, `x` the
//! independent variable, `pi` the constant π; every other identifier is a
//! named parameter. Implicit multiplication (`2x`) is rejected.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Parameter bindings used during evaluation.
pub type Params = HashMap<String, Complex64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Abs,
    Re,
    Im,
    Conj,
}

impl Func {
    pub const ALL: [Func; 12] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sinh,
        Func::Cosh,
        Func::Abs,
        Func::Re,
        Func::Im,
        Func::Conj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Abs => "abs",
            Func::Re => "re",
            Func::Im => "im",
            Func::Conj => "conj",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Parsed expression tree.
///
/// The parser never produces a negative [`Expr::Num`]; negation is always an
/// explicit [`Expr::Neg`] node.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Imag,
    Var,
    Param(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected {0}")]
    Expected(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("invalid number literal `{0}`")]
    BadNumber(String),
    #[error("unexpected character `{0}`")]
    BadChar(char),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(String),
}

/// Evaluation mode. In real mode `log` and `sqrt` of negative reals are
/// domain errors instead of taking the principal complex branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    #[default]
    Complex,
    Real,
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    match parser.peek() {
        (Tok::End, _) => Ok(expr),
        (_, offset) => Err(ParseError {
            offset,
            kind: ParseErrorKind::Expected("operator or end of input".into()),
        }),
    }
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => out.push((Tok::Star, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'0'..=b'9' | b'.' => {
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
                let value: f64 = lit.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::BadNumber(lit.to_string()),
                })?;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::BadChar(ch),
                });
            }
        }
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> (Tok, usize) {
        self.tokens[self.pos].clone()
    }

    fn bump(&mut self) {
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
    }

    fn expected<T>(&self, what: &str) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.tokens[self.pos].1,
            kind: ParseErrorKind::Expected(what.to_string()),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().0 {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().0 {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().0 == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek().0 == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, offset) = self.peek();
        match tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if self.peek().0 != Tok::RParen {
                    return self.expected("`)`");
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                let is_call = self.peek().0 == Tok::LParen;
                if is_call {
                    let func = Func::from_name(&name).ok_or(ParseError {
                        offset,
                        kind: ParseErrorKind::UnknownFunction(name.clone()),
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    if self.peek().0 != Tok::RParen {
                        return self.expected("`)`");
                    }
                    self.bump();
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError {
                        offset: self.tokens[self.pos].1,
                        kind: ParseErrorKind::Expected(format!("`(` after `{name}`")),
                    });
                }
                Ok(match name.as_str() {
                    "x" => Expr::Var,
                    "i" => Expr::Imag,
                    "pi" => Expr::Num(std::f64::consts::PI),
                    _ => Expr::Param(name),
                })
            }
            _ => self.expected("expression"),
        }
    }
}

// ---------------------------------------------------------------------------
// evaluation

fn apply_binary(op: BinOp, a: Complex64, b: Complex64) -> Result<Complex64, EvalError> {
    let value = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b.re == 0.0 && b.im == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            a / b
        }
        BinOp::Pow => power(a, b)?,
    };
    finite(value)
}

fn power(base: Complex64, exponent: Complex64) -> Result<Complex64, EvalError> {
    let base_is_zero = base.re == 0.0 && base.im == 0.0;
    if exponent.im == 0.0 && exponent.re.fract() == 0.0 && exponent.re.abs() <= i32::MAX as f64 {
        let n = exponent.re as i32;
        if base_is_zero && n < 0 {
            return Err(EvalError::DivisionByZero);
        }
        return Ok(base.powi(n));
    }
    if base.im == 0.0 && base.re < 0.0 {
        return Err(EvalError::Domain(format!(
            "non-integer power {exponent} of negative real {}",
            base.re
        )));
    }
    if base_is_zero {
        if exponent.re > 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        return Err(EvalError::Domain(format!("0 raised to {exponent}")));
    }
    Ok(base.powc(exponent))
}

fn apply_func(func: Func, z: Complex64, mode: Mode) -> Result<Complex64, EvalError> {
    let negative_real = z.im == 0.0 && z.re < 0.0;
    let value = match func {
        Func::Sin => z.sin(),
        Func::Cos => z.cos(),
        Func::Tan => z.tan(),
        Func::Exp => z.exp(),
        Func::Log => {
            if z.re == 0.0 && z.im == 0.0 {
                return Err(EvalError::Domain("log of zero".into()));
            }
            if mode == Mode::Real && negative_real {
                return Err(EvalError::Domain(format!("log of negative real {}", z.re)));
            }
            z.ln()
        }
        Func::Sqrt => {
            if mode == Mode::Real && negative_real {
                return Err(EvalError::Domain(format!("sqrt of negative real {}", z.re)));
            }
            z.sqrt()
        }
        Func::Sinh => z.sinh(),
        Func::Cosh => z.cosh(),
        Func::Abs => Complex64::new(z.norm(), 0.0),
        Func::Re => Complex64::new(z.re, 0.0),
        Func::Im => Complex64::new(z.im, 0.0),
        Func::Conj => z.conj(),
    };
    finite(value)
}

fn finite(z: Complex64) -> Result<Complex64, EvalError> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(EvalError::Domain("non-finite result".into()))
    }
}

impl Expr {
    pub fn evaluate(&self, x: f64, params: &Params) -> Result<Complex64, EvalError> {
        self.evaluate_in(x, params, Mode::Complex)
    }

    pub fn evaluate_in(&self, x: f64, params: &Params, mode: Mode) -> Result<Complex64, EvalError> {
        match self {
            Expr::Num(v) => Ok(Complex64::new(*v, 0.0)),
            Expr::Imag => Ok(Complex64::i()),
            Expr::Var => Ok(Complex64::new(x, 0.0)),
            Expr::Param(name) => params
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::UnboundParameter(name.clone())),
            Expr::Neg(e) => Ok(-e.evaluate_in(x, params, mode)?),
            Expr::Binary(op, a, b) => apply_binary(
                *op,
                a.evaluate_in(x, params, mode)?,
                b.evaluate_in(x, params, mode)?,
            ),
            Expr::Call(f, a) => apply_func(*f, a.evaluate_in(x, params, mode)?, mode),
        }
    }

    /// Names of all parameters referenced by the expression, sorted.
    pub fn parameters(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Param(n) => out.push(n.clone()),
                Expr::Neg(a) | Expr::Call(_, a) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::Var => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_x(),
            Expr::Binary(_, a, b) => a.depends_on_x() || b.depends_on_x(),
            _ => false,
        }
    }

    /// The expression with `i` replaced by `-i`. For real `x` and real
    /// parameters this evaluates to the complex conjugate of `self`.
    pub fn conjugated(&self) -> Expr {
        match self {
            Expr::Imag => Expr::Neg(Box::new(Expr::Imag)),
            Expr::Neg(a) => Expr::Neg(Box::new(a.conjugated())),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.conjugated())),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.conjugated()), Box::new(b.conjugated()))
            }
            other => other.clone(),
        }
    }

    /// Bind parameters and fold every `x`-independent subtree to a constant.
    pub fn compile(&self, params: &Params) -> Result<CompiledExpr, EvalError> {
        Ok(CompiledExpr {
            node: fold(self, params)?,
        })
    }
}

/// Fully parenthesized rendering that re-parses to an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Imag => f.write_str("i"),
            Expr::Var => f.write_str("x"),
            Expr::Param(n) => f.write_str(n),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Const(Complex64),
    Var,
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

fn fold(e: &Expr, params: &Params) -> Result<Node, EvalError> {
    if !e.depends_on_x() {
        return Ok(Node::Const(e.evaluate(0.0, params)?));
    }
    Ok(match e {
        Expr::Var => Node::Var,
        Expr::Neg(a) => Node::Neg(Box::new(fold(a, params)?)),
        Expr::Binary(op, a, b) => {
            Node::Binary(*op, Box::new(fold(a, params)?), Box::new(fold(b, params)?))
        }
        Expr::Call(func, a) => Node::Call(*func, Box::new(fold(a, params)?)),
        _ => unreachable!("x-independent leaves are folded above"),
    })
}

/// An expression with parameters bound, ready for repeated evaluation in `x`.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    node: Node,
}

impl CompiledExpr {
    pub fn constant(value: Complex64) -> Self {
        CompiledExpr {
            node: Node::Const(value),
        }
    }

    pub fn as_constant(&self) -> Option<Complex64> {
        match self.node {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> Result<Complex64, EvalError> {
        eval_node(&self.node, x)
    }
}

fn eval_node(node: &Node, x: f64) -> Result<Complex64, EvalError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var => Ok(Complex64::new(x, 0.0)),
        Node::Neg(a) => Ok(-eval_node(a, x)?),
        Node::Binary(op, a, b) => apply_binary(*op, eval_node(a, x)?, eval_node(b, x)?),
        Node::Call(f, a) => apply_func(*f, eval_node(a, x)?, Mode::Complex),
    }
}
