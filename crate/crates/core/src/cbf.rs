//! Time-varying barrier functions assembled over a timed tree.
//!
//! A temporal node adds the decaying margin `-a sigma(t) + b` to its child, a
//! conjunction node takes the smooth minimum of its children, and a leaf is
//! its predicate until the release time, after which it drops out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::smooth::{smooth_min, SmoothMinError};
use crate::stl::{PredicateDef, PredicateError, PredicateTable};
use crate::tree::{Leaf, NodeKind, TimedTree};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CbfError {
    #[error("missing margin for node {0}")]
    MissingMargin(usize),
    #[error("margin b = {b} given for zero-duration node {index}; it must be 0")]
    NonzeroMarginOnPoint { index: usize, b: f64 },
    #[error("nonzero margin for node {0}, which is not a temporal node")]
    MarginOnNonTemporal(usize),
    #[error("margin for node {index} must be finite and non-negative, got {b}")]
    BadMargin { index: usize, b: f64 },
    #[error("evaluation time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error(transparent)]
    SmoothMin(#[from] SmoothMinError),
}

/// Node index to margin `b`.
pub type Margins = BTreeMap<usize, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeParams {
    Temporal { a: f64, b: f64 },
    Conjunction { kappa: f64 },
    Predicate(PredicateDef),
    True,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbfSpec {
    pub timed: TimedTree,
    pub params: Vec<NodeParams>,
}

/// Result of [`eval_cbf`].
#[derive(Debug, Clone, PartialEq)]
pub struct CbfValue {
    /// `+inf` once every leaf is released.
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_t: f64,
    /// Per node: false once the node's subtree no longer contributes.
    pub active: Vec<bool>,
    pub expired: bool,
}

/// `sigma(t)` and its right derivative for a node active on `[active, terminal]`.
pub fn sliding_window(active: f64, terminal: f64, t: f64) -> (f64, f64) {
    if t < active {
        (0.0, 0.0)
    } else if t < terminal {
        (t - active, 1.0)
    } else {
        (terminal - active, 0.0)
    }
}

/// Derives slopes `a = b / (terminal - active)` from margins and attaches predicates to leaves.
pub fn synthesize(
    timed: &TimedTree,
    predicates: &PredicateTable,
    margins: &Margins,
    kappa: f64,
) -> Result<CbfSpec, CbfError> {
    smooth_min(&[0.0], kappa)?;
    for (&index, &b) in margins {
        match timed.tree.nodes().get(index).map(|n| &n.kind) {
            Some(NodeKind::Temporal { .. }) => {}
            Some(_) if b == 0.0 => {}
            _ => return Err(CbfError::MarginOnNonTemporal(index)),
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(CbfError::BadMargin { index, b });
        }
    }
    let mut params = Vec::with_capacity(timed.tree.len());
    for node in timed.tree.nodes() {
        let k = node.index;
        let p = match &node.kind {
            NodeKind::Temporal { .. } => {
                let timing = &timed.timings[k];
                let duration = timing.terminal - timing.active;
                if duration > 0.0 {
                    let b = *margins.get(&k).ok_or(CbfError::MissingMargin(k))?;
                    NodeParams::Temporal { a: b / duration, b }
                } else {
                    match margins.get(&k) {
                        Some(&b) if b != 0.0 => return Err(CbfError::NonzeroMarginOnPoint { index: k, b }),
                        _ => NodeParams::Temporal { a: 0.0, b: 0.0 },
                    }
                }
            }
            NodeKind::Conjunction => NodeParams::Conjunction { kappa },
            NodeKind::Leaf(Leaf::Predicate(name)) => NodeParams::Predicate(predicates.get(name)?.clone()),
            NodeKind::Leaf(Leaf::True) => NodeParams::True,
        };
        params.push(p);
    }
    Ok(CbfSpec { timed: timed.clone(), params })
}

struct Partial {
    value: f64,
    grad_x: Vec<f64>,
    grad_t: f64,
}

impl CbfSpec {
    /// `(a, b)` of a temporal node.
    pub fn slope_margin(&self, index: usize) -> Option<(f64, f64)> {
        match self.params.get(index)? {
            NodeParams::Temporal { a, b } => Some((*a, *b)),
            _ => None,
        }
    }

    /// Smallest state dimension the predicates accept.
    pub fn state_dim(&self) -> usize {
        self.params
            .iter()
            .filter_map(|p| match p {
                NodeParams::Predicate(d) => Some(d.dim()),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Value and gradients of the subtree rooted at `index`, `None` if expired.
    pub fn eval_node(&self, index: usize, x: &[f64], t: f64) -> Result<Option<(f64, Vec<f64>, f64)>, CbfError> {
        let mut active = vec![false; self.params.len()];
        Ok(self.eval_rec(index, x, t, &mut active)?.map(|p| (p.value, p.grad_x, p.grad_t)))
    }

    fn eval_rec(&self, k: usize, x: &[f64], t: f64, active: &mut [bool]) -> Result<Option<Partial>, CbfError> {
        let node = &self.timed.tree.nodes()[k];
        let timing = &self.timed.timings[k];
        let out = match &self.params[k] {
            NodeParams::True => None,
            NodeParams::Predicate(def) => {
                if t >= timing.release.unwrap_or(0.0) {
                    None
                } else {
                    let (value, g) = def.eval_with_grad(def.project(x)?)?;
                    let mut grad_x = vec![0.0; x.len()];
                    grad_x[..g.len()].copy_from_slice(&g);
                    Some(Partial { value, grad_x, grad_t: 0.0 })
                }
            }
            NodeParams::Temporal { a, b } => self.eval_rec(node.children[0], x, t, active)?.map(|mut p| {
                let (sigma, dsigma) = sliding_window(timing.active, timing.terminal, t);
                p.value += -a * sigma + b;
                p.grad_t -= a * dsigma;
                p
            }),
            NodeParams::Conjunction { kappa } => {
                let mut parts = Vec::with_capacity(node.children.len());
                for &c in &node.children {
                    if let Some(p) = self.eval_rec(c, x, t, active)? {
                        parts.push(p);
                    }
                }
                if parts.is_empty() {
                    None
                } else {
                    let values: Vec<f64> = parts.iter().map(|p| p.value).collect();
                    let sm = smooth_min(&values, *kappa)?;
                    let mut grad_x = vec![0.0; x.len()];
                    let mut grad_t = 0.0;
                    for (w, p) in sm.weights.iter().zip(&parts) {
                        for (g, pg) in grad_x.iter_mut().zip(&p.grad_x) {
                            *g += w * pg;
                        }
                        grad_t += w * p.grad_t;
                    }
                    Some(Partial { value: sm.value, grad_x, grad_t })
                }
            }
        };
        active[k] = out.is_some();
        Ok(out)
    }
}

/// Evaluates the full barrier function at `(x, t)`.
pub fn eval_cbf(spec: &CbfSpec, x: &[f64], t: f64) -> Result<CbfValue, CbfError> {
    if t.is_nan() || t < 0.0 {
        return Err(CbfError::NegativeTime(t));
    }
    let mut active = vec![false; spec.params.len()];
    Ok(match spec.eval_rec(0, x, t, &mut active)? {
        Some(p) => CbfValue { value: p.value, grad_x: p.grad_x, grad_t: p.grad_t, active, expired: false },
        None => CbfValue { value: f64::INFINITY, grad_x: vec![0.0; x.len()], grad_t: 0.0, active, expired: true },
    })
}
