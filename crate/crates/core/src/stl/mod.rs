//! Signal Temporal Logic syntax.
//!
//! The fragment supported here is
//!
//! ```text
//! phi ::= T | mu | !mu | phi & phi | G[a,b] phi | F[a,b] phi | phi U[a,b] phi
//! ```
//!
//! Negation only ever applies to predicates. `F` is kept as its own variant
//! instead of being desugared into `T U`, because the tree construction treats
//! it as a first-class operator.

mod parser;
mod predicate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{parse_formula, ParseError};
pub use predicate::{eval_predicate, grad_predicate, PredicateDef, PredicateError, PredicateTable, Shape};

/// Closed time interval `[start, end]` with `0 <= start <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    start: f64,
    end: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntervalError {
    #[error("interval endpoints must be finite and non-negative, got [{0}, {1}]")]
    Negative(f64, f64),
    #[error("interval endpoints out of order: [{0}, {1}]")]
    OutOfOrder(f64, f64),
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self, IntervalError> {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || end < 0.0 {
            return Err(IntervalError::Negative(start, end));
        }
        if start > end {
            return Err(IntervalError::OutOfOrder(start, end));
        }
        Ok(Self { start, end })
    }

    /// Shorthand for tests and literals that are known to be valid.
    ///
    /// # Panics
    /// Panics if the endpoints do not form a valid interval.
    pub fn of(start: f64, end: f64) -> Self {
        Self::new(start, end).expect("invalid interval literal")
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_point(&self) -> bool {
        self.start == self.end
    }

    /// Minkowski sum, the interval of `T[a1,b1] T[a2,b2]` collapsed into one operator.
    pub fn shifted_by(&self, other: &Interval) -> Interval {
        Interval {
            start: self.start + other.start,
            end: self.end + other.end,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalOp {
    Always,
    Eventually,
}

impl TemporalOp {
    pub fn symbol(self) -> char {
        match self {
            TemporalOp::Always => 'G',
            TemporalOp::Eventually => 'F',
        }
    }
}

/// Immutable STL abstract syntax tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    Pred(String),
    NotPred(String),
    And(Vec<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn pred(name: impl Into<String>) -> Self {
        Formula::Pred(name.into())
    }

    pub fn not_pred(name: impl Into<String>) -> Self {
        Formula::NotPred(name.into())
    }

    pub fn always(interval: Interval, body: Formula) -> Self {
        Formula::Always(interval, Box::new(body))
    }

    pub fn eventually(interval: Interval, body: Formula) -> Self {
        Formula::Eventually(interval, Box::new(body))
    }

    pub fn until(interval: Interval, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until(interval, Box::new(lhs), Box::new(rhs))
    }

    pub fn temporal(op: TemporalOp, interval: Interval, body: Formula) -> Self {
        match op {
            TemporalOp::Always => Formula::always(interval, body),
            TemporalOp::Eventually => Formula::eventually(interval, body),
        }
    }

    /// Operator, interval and body of a unary temporal node.
    pub fn as_temporal(&self) -> Option<(TemporalOp, &Interval, &Formula)> {
        match self {
            Formula::Always(i, body) => Some((TemporalOp::Always, i, body)),
            Formula::Eventually(i, body) => Some((TemporalOp::Eventually, i, body)),
            _ => None,
        }
    }

    pub fn is_predicate(&self) -> bool {
        matches!(self, Formula::Pred(_) | Formula::NotPred(_))
    }

    /// Direct subformulas, left to right.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::Pred(_) | Formula::NotPred(_) => Vec::new(),
            Formula::And(parts) => parts.iter().collect(),
            Formula::Always(_, body) | Formula::Eventually(_, body) => vec![body.as_ref()],
            Formula::Until(_, lhs, rhs) => vec![lhs.as_ref(), rhs.as_ref()],
        }
    }

    /// Every predicate name referenced, in first-occurrence order.
    pub fn predicate_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::Pred(n) | Formula::NotPred(n) => {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
            _ => self.children().into_iter().for_each(|c| c.collect_names(out)),
        }
    }

    /// Sum of interval upper endpoints along the deepest temporal nesting;
    /// the amount of signal needed past `t` to evaluate the formula at `t`.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::True | Formula::Pred(_) | Formula::NotPred(_) => 0.0,
            Formula::And(parts) => parts.iter().map(Formula::horizon).fold(0.0, f64::max),
            Formula::Always(i, body) | Formula::Eventually(i, body) => i.end() + body.horizon(),
            Formula::Until(i, lhs, rhs) => i.end() + lhs.horizon().max(rhs.horizon()),
        }
    }

    /// Number of nested temporal operators on the deepest path.
    pub fn temporal_depth(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) | Formula::NotPred(_) => 0,
            Formula::And(parts) => parts.iter().map(Formula::temporal_depth).max().unwrap_or(0),
            Formula::Always(_, body) | Formula::Eventually(_, body) => 1 + body.temporal_depth(),
            Formula::Until(_, lhs, rhs) => 1 + lhs.temporal_depth().max(rhs.temporal_depth()),
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }
}

/// Renders the concrete syntax accepted by [`parse_formula`].
pub fn format_formula(f: &Formula) -> String {
    f.to_string()
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "T"),
            Formula::Pred(n) => write!(f, "{n}"),
            Formula::NotPred(n) => write!(f, "!{n}"),
            Formula::And(parts) => {
                for (k, p) in parts.iter().enumerate() {
                    if k > 0 {
                        write!(f, " & ")?;
                    }
                    write_operand(f, p, matches!(p, Formula::And(_)))?;
                }
                Ok(())
            }
            Formula::Always(i, body) | Formula::Eventually(i, body) => {
                let op = if matches!(self, Formula::Always(..)) { 'G' } else { 'F' };
                write!(f, "{op}{i} ")?;
                write_operand(f, body, matches!(**body, Formula::And(_) | Formula::Until(..)))
            }
            Formula::Until(i, lhs, rhs) => {
                write_operand(f, lhs, matches!(**lhs, Formula::And(_) | Formula::Until(..)))?;
                write!(f, " U{i} ")?;
                write_operand(f, rhs, matches!(**rhs, Formula::And(_) | Formula::Until(..)))
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, operand: &Formula, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({operand})")
    } else {
        write!(f, "{operand}")
    }
}
