//! STL formulas: syntax tree, parsing, printing, positive normal form and
//! time horizons.

mod parser;
mod tree;

use std::fmt;

use thiserror::Error;

use crate::cost::Predicate;
use crate::expr::Expr;

pub use parser::{parse, ParseError, ParseErrorKind};
pub use tree::{enumerate_paths, ChainOp, FormulaTree, NodeKind, Path, PathId, SatisfactionTree, Tau, TreeNode};

/// A bounded time interval `[a, b]` with `0 <= a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid interval [{a}, {b}]: bounds must satisfy 0 <= a < b < inf")]
pub struct IntervalError {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Interval, IntervalError> {
        if a.is_finite() && b.is_finite() && 0.0 <= a && a < b {
            Ok(Interval { a, b })
        } else {
            Err(IntervalError { a, b })
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    Pred(Predicate),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnfError {
    #[error("negation of an until operator cannot be moved to the predicates: {0}")]
    NegatedUntil(String),
}

impl Formula {
    pub fn pred(h: Expr) -> Formula {
        Formula::Pred(Predicate::new(h))
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn always(i: Interval, f: Formula) -> Formula {
        Formula::Always(i, Box::new(f))
    }

    pub fn eventually(i: Interval, f: Formula) -> Formula {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn until(i: Interval, l: Formula, r: Formula) -> Formula {
        Formula::Until(i, Box::new(l), Box::new(r))
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::Pred(_) => vec![],
            Formula::Not(c) | Formula::Always(_, c) | Formula::Eventually(_, c) => vec![c],
            Formula::And(cs) | Formula::Or(cs) => cs.iter().collect(),
            Formula::Until(_, l, r) => vec![l, r],
        }
    }

    /// All predicates in left-to-right order.
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Predicate>) {
            if let Formula::Pred(p) = f {
                out.push(p);
            }
            for c in f.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn contains_until(&self) -> bool {
        matches!(self, Formula::Until(..)) || self.children().iter().any(|c| c.contains_until())
    }

    pub fn contains_not(&self) -> bool {
        matches!(self, Formula::Not(_)) || self.children().iter().any(|c| c.contains_not())
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }
}

/// Time horizon: how far into the future the formula constrains the signal.
pub fn time_horizon(f: &Formula) -> f64 {
    match f {
        Formula::True | Formula::Pred(_) => 0.0,
        Formula::Not(c) => time_horizon(c),
        Formula::And(cs) | Formula::Or(cs) => cs.iter().map(time_horizon).fold(0.0, f64::max),
        Formula::Always(i, c) | Formula::Eventually(i, c) => i.b + time_horizon(c),
        Formula::Until(i, l, r) => i.b + time_horizon(l).max(time_horizon(r)),
    }
}

/// Push negations down to the predicates. `!true` becomes the constant
/// predicate `1 <= 0`.
pub fn to_pnf(f: &Formula) -> Result<Formula, PnfError> {
    pnf(f, false)
}

fn pnf(f: &Formula, negate: bool) -> Result<Formula, PnfError> {
    Ok(match (f, negate) {
        (Formula::True, false) => Formula::True,
        (Formula::True, true) => Formula::pred(Expr::Const(1.0)),
        (Formula::Pred(p), false) => Formula::Pred(p.clone()),
        (Formula::Pred(p), true) => Formula::Pred(p.negated()),
        (Formula::Not(c), n) => pnf(c, !n)?,
        (Formula::And(cs), false) => Formula::And(map_pnf(cs, false)?),
        (Formula::And(cs), true) => Formula::Or(map_pnf(cs, true)?),
        (Formula::Or(cs), false) => Formula::Or(map_pnf(cs, false)?),
        (Formula::Or(cs), true) => Formula::And(map_pnf(cs, true)?),
        (Formula::Always(i, c), false) => Formula::always(*i, pnf(c, false)?),
        (Formula::Always(i, c), true) => Formula::eventually(*i, pnf(c, true)?),
        (Formula::Eventually(i, c), false) => Formula::eventually(*i, pnf(c, false)?),
        (Formula::Eventually(i, c), true) => Formula::always(*i, pnf(c, true)?),
        (Formula::Until(i, l, r), false) => Formula::until(*i, pnf(l, false)?, pnf(r, false)?),
        (u @ Formula::Until(..), true) => return Err(PnfError::NegatedUntil(u.to_string())),
    })
}

fn map_pnf(cs: &[Formula], negate: bool) -> Result<Vec<Formula>, PnfError> {
    cs.iter().map(|c| pnf(c, negate)).collect()
}

// Printing mirrors the grammar so that `parse(f.to_string()) == f`.

fn write_atom(f: &mut fmt::Formatter<'_>, g: &Formula) -> fmt::Result {
    match g {
        Formula::True | Formula::Always(..) | Formula::Eventually(..) | Formula::Not(_) => write!(f, "{g}"),
        _ => write!(f, "({g})"),
    }
}

// Temporal operators take an atom, which cannot start with `!`.
fn write_operand(f: &mut fmt::Formatter<'_>, g: &Formula) -> fmt::Result {
    match g {
        Formula::Not(_) => write!(f, "({g})"),
        _ => write_atom(f, g),
    }
}

fn write_conjunct(f: &mut fmt::Formatter<'_>, g: &Formula, parent_is_and: bool) -> fmt::Result {
    match g {
        Formula::And(_) if parent_is_and => write!(f, "({g})"),
        Formula::Or(_) => write!(f, "({g})"),
        _ => write!(f, "{g}"),
    }
}

fn write_until_operand(f: &mut fmt::Formatter<'_>, g: &Formula) -> fmt::Result {
    match g {
        Formula::True | Formula::Pred(_) => write!(f, "{g}"),
        _ => write!(f, "({g})"),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Not(c) => {
                write!(f, "!")?;
                write_atom(f, c)
            }
            Formula::And(cs) | Formula::Or(cs) => {
                let is_and = matches!(self, Formula::And(_));
                for (k, c) in cs.iter().enumerate() {
                    if k > 0 {
                        write!(f, "{}", if is_and { " && " } else { " || " })?;
                    }
                    write_conjunct(f, c, is_and)?;
                }
                Ok(())
            }
            Formula::Always(i, c) => {
                write!(f, "G{i}")?;
                write_operand(f, c)
            }
            Formula::Eventually(i, c) => {
                write!(f, "F{i}")?;
                write_operand(f, c)
            }
            Formula::Until(i, l, r) => {
                write_until_operand(f, l)?;
                write!(f, " U{i} ")?;
                write_until_operand(f, r)
            }
        }
    }
}
