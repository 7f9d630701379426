//! Expressions shared by guards, invariants, updates, weights and queries.
//!
//! Text is parsed into an unresolved [`Ast`] and then resolved against a
//! network into an index-based [`Expr`]. Values are `f64`; booleans are
//! encoded as `0.0` / `1.0` and any non-zero value is truthy.

use std::fmt;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::interval::{DelaySet, Interval};

pub type VarId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at position {pos}: {message}")]
pub struct SyntaxError {
    pub pos: usize,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(pos: usize, message: impl Into<String>) -> Self {
        SyntaxError { pos, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Num(f64),
    Ident(String),
    Dot,
    Comma,
    Semi,
    Colon,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
    Bang,
    Assign,
    LeadsTo,
    Diamond,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Eof => write!(f, "end of input"),
            other => {
                let s = match other {
                    Tok::Dot => ".",
                    Tok::Comma => ",",
                    Tok::Semi => ";",
                    Tok::Colon => ":",
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::LBracket => "[",
                    Tok::RBracket => "]",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    Tok::Slash => "/",
                    Tok::Lt => "<",
                    Tok::Le => "<=",
                    Tok::Gt => ">",
                    Tok::Ge => ">=",
                    Tok::EqEq => "==",
                    Tok::Ne => "!=",
                    Tok::AndAnd => "&&",
                    Tok::OrOr => "||",
                    Tok::Bang => "!",
                    Tok::Assign => ":=",
                    Tok::LeadsTo => "-->",
                    Tok::Diamond => "<>",
                    _ => unreachable!(),
                };
                write!(f, "`{s}`")
            }
        }
    }
}

pub(crate) fn lex(src: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let rest = &src[i..];
        let two = |s: &str| rest.starts_with(s);
        let tok = if c.is_ascii_digit()
            || (c == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()))
        {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let n: f64 = text
                .parse()
                .map_err(|_| SyntaxError::new(start, format!("malformed number `{text}`")))?;
            out.push((Tok::Num(n), start));
            continue;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        } else if two("-->") {
            i += 3;
            Tok::LeadsTo
        } else if two("<>") {
            i += 2;
            Tok::Diamond
        } else if two("<=") {
            i += 2;
            Tok::Le
        } else if two(">=") {
            i += 2;
            Tok::Ge
        } else if two("==") {
            i += 2;
            Tok::EqEq
        } else if two("!=") {
            i += 2;
            Tok::Ne
        } else if two("&&") {
            i += 2;
            Tok::AndAnd
        } else if two("||") {
            i += 2;
            Tok::OrOr
        } else if two(":=") {
            i += 2;
            Tok::Assign
        } else {
            i += 1;
            match c {
                b'.' => Tok::Dot,
                b',' => Tok::Comma,
                b';' => Tok::Semi,
                b':' => Tok::Colon,
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b'[' => Tok::LBracket,
                b']' => Tok::RBracket,
                b'+' => Tok::Plus,
                b'-' => Tok::Minus,
                b'*' => Tok::Star,
                b'/' => Tok::Slash,
                b'<' => Tok::Lt,
                b'>' => Tok::Gt,
                b'!' => Tok::Bang,
                b'=' => Tok::EqEq,
                _ => {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(SyntaxError::new(start, format!("unexpected character `{ch}`")));
                }
            }
        };
        out.push((tok, start));
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Imply,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Imply => "imply",
        }
    }

    fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }
}

/// Unresolved syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(f64),
    Bool(bool),
    /// `name` or `qualifier.name`
    Name { qualifier: Option<String>, name: String, pos: usize },
    Neg(Box<Ast>),
    Not(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Call { func: String, args: Vec<Ast>, pos: usize },
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Num(n) => write!(f, "{n}"),
            Ast::Bool(b) => write!(f, "{b}"),
            Ast::Name { qualifier: Some(q), name, .. } => write!(f, "{q}.{name}"),
            Ast::Name { qualifier: None, name, .. } => write!(f, "{name}"),
            Ast::Neg(e) => write!(f, "-{e}"),
            Ast::Not(e) => write!(f, "not {e}"),
            Ast::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Ast::Call { func, args, .. } => {
                write!(f, "{func}(")?;
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

/// Recursive-descent parser over a token stream. Also drives the query parser.
pub(crate) struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Parser { toks: lex(src)?, at: 0 })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    pub(crate) fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.at + offset).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    pub(crate) fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    pub(crate) fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub(crate) fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, t: &Tok) -> Result<(), SyntaxError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(SyntaxError::new(self.pos(), format!("expected {t}, found {}", self.peek())))
        }
    }

    pub(crate) fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub(crate) fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_end(&mut self) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(SyntaxError::new(self.pos(), format!("unexpected {}", self.peek())))
        }
    }

    pub(crate) fn number(&mut self) -> Result<f64, SyntaxError> {
        let neg = self.eat(&Tok::Minus);
        let pos = self.pos();
        match self.bump() {
            Tok::Num(n) => Ok(if neg { -n } else { n }),
            other => Err(SyntaxError::new(pos, format!("expected number, found {other}"))),
        }
    }

    pub(crate) fn expr(&mut self) -> Result<Ast, SyntaxError> {
        self.imply()
    }

    fn imply(&mut self) -> Result<Ast, SyntaxError> {
        let lhs = self.or()?;
        if self.eat_keyword("imply") {
            let rhs = self.imply()?;
            return Ok(Ast::Bin(BinOp::Imply, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Ast, SyntaxError> {
        let mut lhs = self.and()?;
        while self.eat_keyword("or") || self.eat(&Tok::OrOr) {
            let rhs = self.and()?;
            lhs = Ast::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Ast, SyntaxError> {
        let mut lhs = self.not()?;
        while self.eat_keyword("and") || self.eat(&Tok::AndAnd) {
            let rhs = self.not()?;
            lhs = Ast::Bin(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Ast, SyntaxError> {
        if self.eat_keyword("not") || self.eat(&Tok::Bang) {
            return Ok(Ast::Not(Box::new(self.not()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Ast, SyntaxError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.sum()?;
        Ok(Ast::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Ast, SyntaxError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Ast, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Ast, SyntaxError> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                Ast::Num(n) => Ast::Num(-n),
                e => Ast::Neg(Box::new(e)),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Ast, SyntaxError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(n) => Ok(Ast::Num(n)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => Ok(Ast::Bool(true)),
                "false" => Ok(Ast::Bool(false)),
                "and" | "or" | "not" | "imply" => {
                    Err(SyntaxError::new(pos, format!("unexpected keyword `{name}`")))
                }
                _ => {
                    if self.eat(&Tok::LParen) {
                        let mut args = Vec::new();
                        if !self.eat(&Tok::RParen) {
                            loop {
                                args.push(self.expr()?);
                                if self.eat(&Tok::RParen) {
                                    break;
                                }
                                self.expect(&Tok::Comma)?;
                            }
                        }
                        Ok(Ast::Call { func: name, args, pos })
                    } else if self.eat(&Tok::Dot) {
                        match self.bump() {
                            Tok::Ident(member) => Ok(Ast::Name { qualifier: Some(name), name: member, pos }),
                            other => Err(SyntaxError::new(pos, format!("expected member name after `{name}.`, found {other}"))),
                        }
                    } else {
                        Ok(Ast::Name { qualifier: None, name, pos })
                    }
                }
            },
            other => Err(SyntaxError::new(pos, format!("expected expression, found {other}"))),
        }
    }
}

/// Parses a complete expression.
pub fn parse_expr(src: &str) -> Result<Ast, SyntaxError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_end()?;
    Ok(e)
}

/// What a name resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Var(VarId),
    Location { automaton: usize, location: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("unknown function `{name}` at position {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("function `{name}` expects {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarId),
    At { automaton: usize, location: usize },
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    /// Uniform sample from `(lo, hi]`; only legal on the right-hand side of updates.
    Uniform(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn resolve(
        ast: &Ast,
        lookup: &dyn Fn(Option<&str>, &str) -> Option<Symbol>,
    ) -> Result<Expr, ResolveError> {
        Ok(match ast {
            Ast::Num(n) => Expr::Const(*n),
            Ast::Bool(b) => Expr::Const(if *b { 1.0 } else { 0.0 }),
            Ast::Name { qualifier, name, pos } => match lookup(qualifier.as_deref(), name) {
                Some(Symbol::Var(v)) => Expr::Var(v),
                Some(Symbol::Location { automaton, location }) => Expr::At { automaton, location },
                None => {
                    let full = match qualifier {
                        Some(q) => format!("{q}.{name}"),
                        None => name.clone(),
                    };
                    return Err(ResolveError::UnknownIdentifier { name: full, pos: *pos });
                }
            },
            Ast::Neg(e) => Expr::Neg(Box::new(Self::resolve(e, lookup)?)),
            Ast::Not(e) => Expr::Not(Box::new(Self::resolve(e, lookup)?)),
            Ast::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(Self::resolve(a, lookup)?),
                Box::new(Self::resolve(b, lookup)?),
            ),
            Ast::Call { func, args, pos } => {
                let arity = match func.as_str() {
                    "uniform" | "min" | "max" => 2,
                    "abs" => 1,
                    _ => return Err(ResolveError::UnknownFunction { name: func.clone(), pos: *pos }),
                };
                if args.len() != arity {
                    return Err(ResolveError::Arity { name: func.clone(), expected: arity, got: args.len() });
                }
                let mut r = args
                    .iter()
                    .map(|a| Self::resolve(a, lookup).map(Box::new))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter();
                let a = r.next().unwrap();
                match func.as_str() {
                    "uniform" => Expr::Uniform(a, r.next().unwrap()),
                    "min" => Expr::Min(a, r.next().unwrap()),
                    "max" => Expr::Max(a, r.next().unwrap()),
                    _ => Expr::Abs(a),
                }
            }
        })
    }

    pub fn is_random(&self) -> bool {
        match self {
            Expr::Uniform(..) => true,
            Expr::Const(_) | Expr::Var(_) | Expr::At { .. } => false,
            Expr::Neg(e) | Expr::Not(e) | Expr::Abs(e) => e.is_random(),
            Expr::Bin(_, a, b) | Expr::Min(a, b) | Expr::Max(a, b) => a.is_random() || b.is_random(),
        }
    }

    /// Value of an expression that references no variables or locations.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Var(_) | Expr::At { .. } | Expr::Uniform(..) => None,
            _ => {
                let mut deps = false;
                self.visit_leaves(&mut |e| {
                    if !matches!(e, Expr::Const(_)) {
                        deps = true;
                    }
                });
                if deps {
                    None
                } else {
                    Some(self.eval(&[], &[]))
                }
            }
        }
    }

    fn visit_leaves(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            Expr::Neg(e) | Expr::Not(e) | Expr::Abs(e) => e.visit_leaves(f),
            Expr::Bin(_, a, b) | Expr::Min(a, b) | Expr::Max(a, b) | Expr::Uniform(a, b) => {
                a.visit_leaves(f);
                b.visit_leaves(f);
            }
            leaf => f(leaf),
        }
    }

    /// Deterministic evaluation. Panics on `uniform`, which validation confines to updates.
    pub fn eval(&self, vals: &[f64], locs: &[usize]) -> f64 {
        self.eval_inner(vals, locs, &mut None)
    }

    pub fn eval_random(&self, vals: &[f64], locs: &[usize], rng: &mut dyn RngCore) -> f64 {
        self.eval_inner(vals, locs, &mut Some(rng))
    }

    pub fn holds(&self, vals: &[f64], locs: &[usize]) -> bool {
        self.eval(vals, locs) != 0.0
    }

    fn eval_inner(&self, vals: &[f64], locs: &[usize], rng: &mut Option<&mut dyn RngCore>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => vals[*v],
            Expr::At { automaton, location } => truth(locs[*automaton] == *location),
            Expr::Neg(e) => -e.eval_inner(vals, locs, rng),
            Expr::Not(e) => truth(e.eval_inner(vals, locs, rng) == 0.0),
            Expr::Abs(e) => e.eval_inner(vals, locs, rng).abs(),
            Expr::Min(a, b) => a.eval_inner(vals, locs, rng).min(b.eval_inner(vals, locs, rng)),
            Expr::Max(a, b) => a.eval_inner(vals, locs, rng).max(b.eval_inner(vals, locs, rng)),
            Expr::Uniform(a, b) => {
                let lo = a.eval_inner(vals, locs, rng);
                let hi = b.eval_inner(vals, locs, rng);
                let r = rng.as_mut().expect("uniform() evaluated outside an update");
                let u: f64 = r.random();
                // 1 - u lies in (0, 1], so the sample lies in (lo, hi]
                lo + (hi - lo) * (1.0 - u)
            }
            Expr::Bin(op, a, b) => {
                let x = a.eval_inner(vals, locs, rng);
                match op {
                    BinOp::And => {
                        if x == 0.0 {
                            0.0
                        } else {
                            truth(b.eval_inner(vals, locs, rng) != 0.0)
                        }
                    }
                    BinOp::Or => {
                        if x != 0.0 {
                            1.0
                        } else {
                            truth(b.eval_inner(vals, locs, rng) != 0.0)
                        }
                    }
                    BinOp::Imply => {
                        if x == 0.0 {
                            1.0
                        } else {
                            truth(b.eval_inner(vals, locs, rng) != 0.0)
                        }
                    }
                    _ => {
                        let y = b.eval_inner(vals, locs, rng);
                        match op {
                            BinOp::Add => x + y,
                            BinOp::Sub => x - y,
                            BinOp::Mul => x * y,
                            BinOp::Div => x / y,
                            BinOp::Lt => truth(x < y),
                            BinOp::Le => truth(x <= y),
                            BinOp::Gt => truth(x > y),
                            BinOp::Ge => truth(x >= y),
                            BinOp::Eq => truth(x == y),
                            BinOp::Ne => truth(x != y),
                            BinOp::And | BinOp::Or | BinOp::Imply => unreachable!(),
                        }
                    }
                }
            }
        }
    }

    /// The value as a function `c + s * t` of the delay `t`, given per-variable
    /// rates. Sub-terms that are not affine in `t` are frozen at `t = 0`.
    pub fn affine(&self, vals: &[f64], rates: &[f64], locs: &[usize]) -> (f64, f64) {
        match self {
            Expr::Const(c) => (*c, 0.0),
            Expr::Var(v) => (vals[*v], rates[*v]),
            Expr::Neg(e) => {
                let (c, s) = e.affine(vals, rates, locs);
                (-c, -s)
            }
            Expr::Bin(BinOp::Add, a, b) => {
                let (c1, s1) = a.affine(vals, rates, locs);
                let (c2, s2) = b.affine(vals, rates, locs);
                (c1 + c2, s1 + s2)
            }
            Expr::Bin(BinOp::Sub, a, b) => {
                let (c1, s1) = a.affine(vals, rates, locs);
                let (c2, s2) = b.affine(vals, rates, locs);
                (c1 - c2, s1 - s2)
            }
            Expr::Bin(BinOp::Mul, a, b) => {
                let (c1, s1) = a.affine(vals, rates, locs);
                let (c2, s2) = b.affine(vals, rates, locs);
                if s1 == 0.0 {
                    (c1 * c2, c1 * s2)
                } else if s2 == 0.0 {
                    (c1 * c2, s1 * c2)
                } else {
                    (c1 * c2, 0.0)
                }
            }
            Expr::Bin(BinOp::Div, a, b) => {
                let (c1, s1) = a.affine(vals, rates, locs);
                let (c2, s2) = b.affine(vals, rates, locs);
                if s2 == 0.0 {
                    (c1 / c2, s1 / c2)
                } else {
                    (c1 / c2, 0.0)
                }
            }
            other => (other.eval(vals, locs), 0.0),
        }
    }

    /// The set of delays `t >= 0` after which the expression is truthy,
    /// assuming every variable evolves as `v + rate * t` and locations stay fixed.
    pub fn holds_set(&self, vals: &[f64], rates: &[f64], locs: &[usize]) -> DelaySet {
        match self {
            Expr::Const(c) => DelaySet::from_bool(*c != 0.0),
            Expr::At { automaton, location } => DelaySet::from_bool(locs[*automaton] == *location),
            Expr::Not(e) => e.holds_set(vals, rates, locs).complement(),
            Expr::Bin(BinOp::And, a, b) => {
                let sa = a.holds_set(vals, rates, locs);
                if sa.is_empty() {
                    return sa;
                }
                sa.intersect(&b.holds_set(vals, rates, locs))
            }
            Expr::Bin(BinOp::Or, a, b) => a.holds_set(vals, rates, locs).union(&b.holds_set(vals, rates, locs)),
            Expr::Bin(BinOp::Imply, a, b) => a
                .holds_set(vals, rates, locs)
                .complement()
                .union(&b.holds_set(vals, rates, locs)),
            Expr::Bin(op, a, b) if op.is_comparison() => {
                let (c1, s1) = a.affine(vals, rates, locs);
                let (c2, s2) = b.affine(vals, rates, locs);
                compare_set(*op, c1 - c2, s1 - s2)
            }
            numeric => {
                let (c, s) = numeric.affine(vals, rates, locs);
                compare_set(BinOp::Ne, c, s)
            }
        }
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Delays `t >= 0` with `(c + s*t) op 0`.
fn compare_set(op: BinOp, c: f64, s: f64) -> DelaySet {
    if s == 0.0 {
        let holds = match op {
            BinOp::Lt => c < 0.0,
            BinOp::Le => c <= 0.0,
            BinOp::Gt => c > 0.0,
            BinOp::Ge => c >= 0.0,
            BinOp::Eq => c == 0.0,
            BinOp::Ne => c != 0.0,
            _ => unreachable!(),
        };
        return DelaySet::from_bool(holds);
    }
    let root = -c / s;
    let below = |closed| Interval { lo: 0.0, lo_closed: true, hi: root, hi_closed: closed };
    let above = |closed| Interval { lo: root, lo_closed: closed, hi: f64::INFINITY, hi_closed: false };
    let iv = match (op, s > 0.0) {
        // increasing function: below the root it is negative
        (BinOp::Lt, true) | (BinOp::Gt, false) => below(false),
        (BinOp::Le, true) | (BinOp::Ge, false) => below(true),
        (BinOp::Gt, true) | (BinOp::Lt, false) => above(false),
        (BinOp::Ge, true) | (BinOp::Le, false) => above(true),
        (BinOp::Eq, _) => Interval { lo: root, lo_closed: true, hi: root, hi_closed: true },
        (BinOp::Ne, _) => {
            return DelaySet::from_interval(Interval { lo: root, lo_closed: true, hi: root, hi_closed: true })
                .complement()
        }
        _ => unreachable!(),
    };
    DelaySet::from_interval(iv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn resolve_simple(src: &str, names: &[&str]) -> Expr {
        let ast = parse_expr(src).unwrap();
        Expr::resolve(&ast, &|q, n| {
            if q.is_some() {
                return None;
            }
            names.iter().position(|x| *x == n).map(Symbol::Var)
        })
        .unwrap()
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = resolve_simple("1 + 2 * 3 == 7 and -8 == 0 - 8", &[]);
        assert_eq!(e.eval(&[], &[]), 1.0);
        let e = resolve_simple("angle1 == -8", &["angle1"]);
        assert!(e.holds(&[-8.0], &[]));
    }

    #[test]
    fn imply_is_right_associative_and_lowest() {
        let ast = parse_expr("a imply b imply c").unwrap();
        assert_eq!(ast.to_string(), "(a imply (b imply c))");
        let ast = parse_expr("a and b imply c or d").unwrap();
        assert_eq!(ast.to_string(), "((a and b) imply (c or d))");
    }

    #[test]
    fn qualified_names_parse() {
        let ast = parse_expr("Behavior.InIdle imply Behavior.angle1 == -8").unwrap();
        match ast {
            Ast::Bin(BinOp::Imply, lhs, _) => assert_eq!(
                *lhs,
                Ast::Name { qualifier: Some("Behavior".into()), name: "InIdle".into(), pos: 0 }
            ),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_expr("x + * 2").unwrap_err();
        assert_eq!(err.pos, 4);
        let err = parse_expr("(x").unwrap_err();
        assert_eq!(err.pos, 2);
        assert!(parse_expr("x $ y").is_err());
    }

    #[test]
    fn unknown_identifier_is_reported() {
        let ast = parse_expr("y + 1").unwrap();
        let err = Expr::resolve(&ast, &|_, _| None).unwrap_err();
        assert_eq!(err, ResolveError::UnknownIdentifier { name: "y".into(), pos: 0 });
    }

    #[test]
    fn uniform_samples_half_open_range() {
        let e = resolve_simple("uniform(15, 44)", &[]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let v = e.eval_random(&[], &[], &mut rng);
            assert!(v > 15.0 && v <= 44.0);
        }
        assert!(e.is_random());
    }

    #[test]
    fn holds_set_of_clock_bounds() {
        // e1 <= 15 with e1 = 5, rate 1
        let e = resolve_simple("e1 <= 15", &["e1"]);
        let s = e.holds_set(&[5.0], &[1.0], &[]);
        assert_eq!(s.reach_from_zero(), Some(10.0));
        // guard x >= wait with x = 2, wait = 7.5
        let g = resolve_simple("x >= wait", &["x", "wait"]);
        let s = g.holds_set(&[2.0, 7.5], &[1.0, 0.0], &[]);
        assert_eq!(s.earliest(), Some((5.5, true)));
        // strict lower bound is not attained
        let g = resolve_simple("x > 3", &["x"]);
        assert_eq!(g.holds_set(&[0.0], &[1.0], &[]).earliest(), Some((3.0, false)));
    }

    #[test]
    fn holds_set_matches_pointwise_evaluation() {
        let e = resolve_simple("(x >= 2 and x < 5) or (y - 2 * x > 1 imply x == 7)", &["x", "y"]);
        let vals = [0.5, 3.0];
        let rates = [1.0, 0.5];
        let set = e.holds_set(&vals, &rates, &[]);
        for k in 0..200 {
            let t = k as f64 * 0.0625;
            let now = [vals[0] + rates[0] * t, vals[1] + rates[1] * t];
            assert_eq!(set.contains(t), e.holds(&now, &[]), "t = {t}");
        }
    }

    #[test]
    fn constant_folding() {
        assert_eq!(resolve_simple("-(2 * 3)", &[]).constant_value(), Some(-6.0));
        assert_eq!(resolve_simple("x", &["x"]).constant_value(), None);
    }
}
