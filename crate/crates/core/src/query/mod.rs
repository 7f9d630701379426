//! Query language and statistical evaluation.
//!
//! Supported forms:
//!
//! ```text
//! E[<=T; N] (max:EXPR)      E[<=T; N] (min:EXPR)
//! Pr[t<=T](<> PRED)
//! A[] PRED                  A[] not deadlock
//! E<> PRED
//! PRED --> PRED
//! ```

mod eval;

use std::fmt;

use thiserror::Error;

use crate::expr::{Ast, Expr, Parser, ResolveError, SyntaxError, Tok};
use crate::network::{Network, SimError};

pub use eval::{
    check_monitored, estimate_expectation, estimate_probability, evaluate, evaluate_all, render_table, CheckConfig,
    Evidence, SmcResult, Verdict,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("invalid query: {0}")]
    Invalid(String),
    #[error("trial {trial}: {error}")]
    Simulation { trial: u64, error: SimError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    ExpectedValue { horizon: f64, runs: u64, extremum: Extremum, expr: Ast },
    Probability { horizon: f64, predicate: Ast },
    Always(Ast),
    Exists(Ast),
    LeadsTo(Ast, Ast),
    NoDeadlock,
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::ExpectedValue { horizon, runs, extremum, expr } => {
                let m = match extremum {
                    Extremum::Max => "max",
                    Extremum::Min => "min",
                };
                write!(f, "E[<={horizon}; {runs}] ({m}:{expr})")
            }
            Query::Probability { horizon, predicate } => write!(f, "Pr[t<={horizon}](<> {predicate})"),
            Query::Always(p) => write!(f, "A[] {p}"),
            Query::Exists(p) => write!(f, "E<> {p}"),
            Query::LeadsTo(a, b) => write!(f, "{a} --> {b}"),
            Query::NoDeadlock => write!(f, "A[] not deadlock"),
        }
    }
}

fn positive_number(p: &mut Parser, what: &str) -> Result<f64, QueryError> {
    let pos = p.pos();
    let n = p.number()?;
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(SyntaxError::new(pos, format!("{what} must be positive, got {n}")).into())
    }
}

fn bound(p: &mut Parser) -> Result<f64, QueryError> {
    p.expect(&Tok::LBracket)?;
    p.expect(&Tok::Le)?;
    positive_number(p, "time bound")
}

/// Parses one query.
pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let mut p = Parser::new(text)?;
    let q = if p.is_keyword("E") && *p.peek_at(1) == Tok::LBracket {
        p.bump();
        let horizon = bound(&mut p)?;
        p.expect(&Tok::Semi)?;
        let pos = p.pos();
        let runs = positive_number(&mut p, "run count")?;
        if runs.fract() != 0.0 {
            return Err(SyntaxError::new(pos, "run count must be an integer").into());
        }
        p.expect(&Tok::RBracket)?;
        p.expect(&Tok::LParen)?;
        let extremum = if p.eat_keyword("max") {
            Extremum::Max
        } else if p.eat_keyword("min") {
            Extremum::Min
        } else {
            return Err(SyntaxError::new(p.pos(), format!("expected `max` or `min`, found {}", p.peek())).into());
        };
        p.expect(&Tok::Colon)?;
        let expr = p.expr()?;
        p.expect(&Tok::RParen)?;
        Query::ExpectedValue { horizon, runs: runs as u64, extremum, expr }
    } else if p.is_keyword("E") && *p.peek_at(1) == Tok::Diamond {
        p.bump();
        p.bump();
        Query::Exists(p.expr()?)
    } else if p.is_keyword("Pr") && *p.peek_at(1) == Tok::LBracket {
        p.bump();
        p.expect(&Tok::LBracket)?;
        if !p.eat_keyword("t") {
            return Err(SyntaxError::new(p.pos(), format!("expected `t`, found {}", p.peek())).into());
        }
        p.expect(&Tok::Le)?;
        let horizon = positive_number(&mut p, "time bound")?;
        p.expect(&Tok::RBracket)?;
        p.expect(&Tok::LParen)?;
        p.expect(&Tok::Diamond)?;
        let predicate = p.expr()?;
        p.expect(&Tok::RParen)?;
        Query::Probability { horizon, predicate }
    } else if p.is_keyword("A") && *p.peek_at(1) == Tok::LBracket {
        p.bump();
        p.bump();
        p.expect(&Tok::RBracket)?;
        if p.is_keyword("not")
            && matches!(p.peek_at(1), Tok::Ident(s) if s == "deadlock")
            && *p.peek_at(2) == Tok::Eof
        {
            p.bump();
            p.bump();
            Query::NoDeadlock
        } else {
            Query::Always(p.expr()?)
        }
    } else {
        let a = p.expr()?;
        p.expect(&Tok::LeadsTo)?;
        let b = p.expr()?;
        Query::LeadsTo(a, b)
    };
    p.expect_end()?;
    Ok(q)
}

/// Query lines of a query file: blank lines and `#` comments are skipped.
/// Returns `(line number, text)` pairs.
pub fn query_lines(source: &str) -> Vec<(usize, &str)> {
    source
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let l = l.split_once('#').map_or(l, |(q, _)| q).trim();
            (!l.is_empty()).then_some((i + 1, l))
        })
        .collect()
}

/// A query resolved against a network.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledQuery {
    ExpectedValue { horizon: f64, runs: u64, extremum: Extremum, expr: Expr },
    Probability { horizon: f64, predicate: Expr },
    Always(Expr),
    Exists(Expr),
    LeadsTo(Expr, Expr),
    NoDeadlock,
}

/// A parsed query together with its source text and resolved form.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub text: String,
    pub query: Query,
    pub compiled: CompiledQuery,
}

impl Query {
    pub fn compile(&self, net: &Network) -> Result<CompiledQuery, QueryError> {
        let r = |a: &Ast| -> Result<Expr, QueryError> {
            let e = Expr::resolve(a, &|q, n| net.lookup(q, n))?;
            if e.is_random() {
                return Err(QueryError::Invalid("`uniform` is not allowed in queries".into()));
            }
            Ok(e)
        };
        Ok(match self {
            Query::ExpectedValue { horizon, runs, extremum, expr } => {
                CompiledQuery::ExpectedValue { horizon: *horizon, runs: *runs, extremum: *extremum, expr: r(expr)? }
            }
            Query::Probability { horizon, predicate } => {
                CompiledQuery::Probability { horizon: *horizon, predicate: r(predicate)? }
            }
            Query::Always(p) => CompiledQuery::Always(r(p)?),
            Query::Exists(p) => CompiledQuery::Exists(r(p)?),
            Query::LeadsTo(a, b) => CompiledQuery::LeadsTo(r(a)?, r(b)?),
            Query::NoDeadlock => CompiledQuery::NoDeadlock,
        })
    }
}

impl BoundQuery {
    pub fn new(net: &Network, text: &str) -> Result<Self, QueryError> {
        let query = parse_query(text)?;
        let compiled = query.compile(net)?;
        Ok(BoundQuery { text: text.trim().to_string(), query, compiled })
    }
}
