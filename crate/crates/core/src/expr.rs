//! Coefficient expressions in `t`, `x` and `u`.
//!
//! A small recursive-descent parser for formulas such as `sin(2*pi*t) - x`
//! plus a tree-walking evaluator. Precedence, tightest first: `^`
//! (right-associative), unary minus, `* /`, `+ -`. There is no implicit
//! multiplication, so `2x` is rejected.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    U,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::U => "u",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Abstract syntax tree of a coefficient formula.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(Constant),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: {message} (expected one of: {})", expected.join(", "))]
    Syntax {
        position: usize,
        message: String,
        expected: Vec<String>,
    },
    #[error("unknown identifier `{name}` at byte {position}")]
    UnknownIdentifier { name: String, position: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalErrorKind {
    DivZero,
    Domain,
    MissingVar,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("evaluation error ({kind:?}): {detail}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub detail: String,
}

impl EvalError {
    fn new(kind: EvalErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }
}

/// Values supplied for the free variables of an expression.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub t: Option<f64>,
    pub x: Option<f64>,
    pub u: Option<f64>,
}

impl Bindings {
    pub fn tx(t: f64, x: f64) -> Self {
        Self {
            t: Some(t),
            x: Some(x),
            u: None,
        }
    }

    pub fn txu(t: f64, x: f64, u: f64) -> Self {
        Self {
            t: Some(t),
            x: Some(x),
            u: Some(u),
        }
    }

    fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::T => self.t,
            Var::X => self.x,
            Var::U => self.u,
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }

    pub fn eval(&self, vars: &Bindings) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Num(v) => *v,
            Expr::Const(c) => c.value(),
            Expr::Var(v) => vars.get(*v).ok_or_else(|| {
                EvalError::new(
                    EvalErrorKind::MissingVar,
                    format!("variable `{}` not supplied", v.name()),
                )
            })?,
            Expr::Neg(e) => -e.eval(vars)?,
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(vars)?;
                let b = rhs.eval(vars)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::new(
                                EvalErrorKind::DivZero,
                                format!("{a} / 0"),
                            ));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b < 0.0 {
                            return Err(EvalError::new(
                                EvalErrorKind::DivZero,
                                format!("0 ^ {b}"),
                            ));
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(vars)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(EvalError::new(
                                EvalErrorKind::Domain,
                                format!("log({a})"),
                            ));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::new(
                                EvalErrorKind::Domain,
                                format!("sqrt({a})"),
                            ));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                }
            }
        };
        if value.is_nan() {
            return Err(EvalError::new(
                EvalErrorKind::Domain,
                format!("`{self}` evaluated to NaN"),
            ));
        }
        Ok(value)
    }

    /// Variables occurring anywhere in the tree.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Num(_) | Expr::Const(_) => {}
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        self.free_vars().contains(&var)
    }

    /// Replaces every occurrence of `var` by the number `value`.
    pub fn substitute(&self, var: Var, value: f64) -> Expr {
        match self {
            Expr::Var(v) if *v == var => Expr::Num(value),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(var, value))),
            Expr::Call(f, e) => Expr::Call(*f, Box::new(e.substitute(var, value))),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(var, value), b.substitute(var, value)),
            other => other.clone(),
        }
    }
}

/// Fully parenthesised rendering; parsing it back gives the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Const(c) => f.write_str(c.name()),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source.len(),
    };
    let expr = parser.expression()?;
    match parser.peek() {
        None => Ok(expr),
        Some(tok) => Err(ParseError::Syntax {
            position: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
            expected: vec!["operator".into(), "end of input".into()],
        }),
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(c) => format!("`{c}`"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // exponent only when digits follow, so `2e` stays `2` followed by `e`
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
            let text = &source[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                position: start,
                message: format!("malformed number `{text}`"),
                expected: vec!["number".into()],
            })?;
            tokens.push(Token {
                kind: TokenKind::Number(value),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(source[start..i].to_string()),
                offset: start,
            });
        } else {
            let kind = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => TokenKind::Op(c as char),
                b'(' => TokenKind::LParen,
                b')' => TokenKind::RParen,
                _ => {
                    let ch = source[start..].chars().next().unwrap_or('?');
                    return Err(ParseError::Syntax {
                        position: start,
                        message: format!("unexpected character `{ch}`"),
                        expected: primary_expected(),
                    });
                }
            };
            i += 1;
            tokens.push(Token {
                kind,
                offset: start,
            });
        }
    }
    Ok(tokens)
}

fn primary_expected() -> Vec<String> {
    ["number", "variable", "constant", "function call", "`(`", "`-`"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn expression(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            // right operand may carry its own sign: 2^-x
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError::Syntax {
                position: self.end,
                message: "unexpected end of input".into(),
                expected: primary_expected(),
            });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.expression()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => match name.as_str() {
                "t" => Ok(Expr::Var(Var::T)),
                "x" => Ok(Expr::Var(Var::X)),
                "u" => Ok(Expr::Var(Var::U)),
                "pi" => Ok(Expr::Const(Constant::Pi)),
                "e" => Ok(Expr::Const(Constant::E)),
                other => match Func::from_name(other) {
                    Some(func) => {
                        match self.peek() {
                            Some(Token {
                                kind: TokenKind::LParen,
                                ..
                            }) => self.pos += 1,
                            _ => {
                                return Err(ParseError::Syntax {
                                    position: self.offset(),
                                    message: format!("function `{other}` needs an argument"),
                                    expected: vec!["`(`".into()],
                                })
                            }
                        }
                        let arg = self.expression()?;
                        self.expect_rparen()?;
                        Ok(Expr::call(func, arg))
                    }
                    None => Err(ParseError::UnknownIdentifier {
                        name,
                        position: tok.offset,
                    }),
                },
            },
            kind => Err(ParseError::Syntax {
                position: tok.offset,
                message: format!("unexpected {}", kind.describe()),
                expected: primary_expected(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(ParseError::Syntax {
                position: tok.offset,
                message: format!("unexpected {}", tok.kind.describe()),
                expected: vec!["`)`".into(), "operator".into()],
            }),
            None => Err(ParseError::Syntax {
                position: self.end,
                message: "unclosed parenthesis".into(),
                expected: vec!["`)`".into()],
            }),
        }
    }
}

/// A parsed coefficient together with its declared time period.
///
/// When a period is declared, `t` is reduced modulo the period with the
/// exact floating remainder before evaluation, so periodicity is enforced by
/// the library rather than trusted from the formula.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    source: String,
    expr: Expr,
    period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("variable `{0}` is not allowed in this coefficient")]
    UndeclaredVar(&'static str),
}

impl CoefficientField {
    pub fn parse(source: &str, period: Option<f64>) -> Result<Self, FieldError> {
        if let Some(p) = period {
            if !(p.is_finite() && p > 0.0) {
                return Err(FieldError::BadPeriod(p));
            }
        }
        let expr = parse_expr(source)?;
        Ok(Self {
            source: source.to_string(),
            expr,
            period,
        })
    }

    /// Parses and rejects any variable outside `allowed`.
    pub fn parse_restricted(
        source: &str,
        period: Option<f64>,
        allowed: &[Var],
    ) -> Result<Self, FieldError> {
        let field = Self::parse(source, period)?;
        if let Some(v) = field.expr.free_vars().into_iter().find(|v| !allowed.contains(v)) {
            return Err(FieldError::UndeclaredVar(v.name()));
        }
        Ok(field)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            source: format!("{value:?}"),
            expr: Expr::Num(value),
            period: None,
        }
    }

    pub fn from_expr(expr: Expr, period: Option<f64>) -> Self {
        Self {
            source: expr.to_string(),
            expr,
            period,
        }
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn is_time_dependent(&self) -> bool {
        self.expr.depends_on(Var::T)
    }

    pub fn reduce_time(&self, t: f64) -> f64 {
        match self.period {
            Some(p) => {
                let r = t % p;
                if r < 0.0 {
                    r + p
                } else {
                    r
                }
            }
            None => t,
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        self.expr.eval(&Bindings::tx(self.reduce_time(t), x))
    }

    pub fn eval_u(&self, t: f64, x: f64, u: f64) -> Result<f64, EvalError> {
        self.expr.eval(&Bindings::txu(self.reduce_time(t), x, u))
    }
}
