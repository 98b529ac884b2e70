//! Specification trees and their timing.
//!
//! Nodes are formulas; an edge from a temporal node carries its operator and
//! interval, an edge from a conjunction node carries `&`. Every node receives
//! an active time and a terminal time; every leaf receives a release time
//! after which its predicate no longer constrains the trajectory.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::stl::{Formula, Interval, TemporalOp};
use crate::transform::{check_desired_form, Violation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("formula is not in the tree-compatible form: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    NotDesiredForm(Vec<Violation>),
    #[error("t* = {t_star} for node {index} lies outside {interval}")]
    TStarOutOfRange { index: usize, t_star: f64, interval: Interval },
    #[error("t* override for node {index} which is not an eventually node")]
    TStarNotEventually { index: usize },
    #[error("no node with index {0}")]
    UnknownNode(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Leaf {
    Predicate(String),
    /// A constant `T`, satisfied everywhere and never constraining.
    True,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Temporal { op: TemporalOp, interval: Interval },
    Conjunction,
    Leaf(Leaf),
}

/// Label on the edge from a node to its children.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeLabel {
    Temporal(TemporalOp, Interval),
    And,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub index: usize,
    pub formula: Formula,
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    /// Label on the edges to this node's children, `None` for leaves.
    pub fn edge_label(&self) -> Option<EdgeLabel> {
        match self.kind {
            NodeKind::Temporal { op, interval } => Some(EdgeLabel::Temporal(op, interval)),
            NodeKind::Conjunction => Some(EdgeLabel::And),
            NodeKind::Leaf(_) => None,
        }
    }
}

/// Nodes indexed by position. The root is node 0; the remaining internal
/// nodes follow in breadth-first order, then the leaves in breadth-first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> Result<&TreeNode, TreeError> {
        self.nodes.get(index).ok_or(TreeError::UnknownNode(index))
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Temporal operators from the root down to `index`, outermost first.
    pub fn path_intervals(&self, index: usize) -> Vec<Interval> {
        let mut out = Vec::new();
        let mut cur = self.nodes[index].parent;
        while let Some(p) = cur {
            if let NodeKind::Temporal { interval, .. } = self.nodes[p].kind {
                out.push(interval);
            }
            cur = self.nodes[p].parent;
        }
        out.reverse();
        out
    }
}

fn kind_of(f: &Formula) -> NodeKind {
    match f {
        Formula::True => NodeKind::Leaf(Leaf::True),
        Formula::Pred(n) => NodeKind::Leaf(Leaf::Predicate(n.clone())),
        Formula::And(_) => NodeKind::Conjunction,
        Formula::Always(i, _) => NodeKind::Temporal { op: TemporalOp::Always, interval: *i },
        Formula::Eventually(i, _) => NodeKind::Temporal { op: TemporalOp::Eventually, interval: *i },
        Formula::NotPred(_) | Formula::Until(..) => unreachable!("rejected by the desired-form check"),
    }
}

/// Builds the tree of a formula in the tree-compatible form.
pub fn build_tree(f: &Formula) -> Result<Tree, TreeError> {
    let violations = check_desired_form(f);
    if !violations.is_empty() {
        return Err(TreeError::NotDesiredForm(violations));
    }
    // Breadth-first walk recording (formula, parent position in walk order).
    let mut order: Vec<(&Formula, Option<usize>)> = Vec::new();
    let mut queue = VecDeque::from([(f, None)]);
    while let Some((g, parent)) = queue.pop_front() {
        let pos = order.len();
        order.push((g, parent));
        for c in g.children() {
            queue.push_back((c, Some(pos)));
        }
    }
    let is_leaf = |g: &Formula| g.children().is_empty();
    let mut index_of = vec![0usize; order.len()];
    let mut next = 0;
    for pass_leaves in [false, true] {
        for (pos, (g, _)) in order.iter().enumerate() {
            if is_leaf(g) == pass_leaves {
                index_of[pos] = next;
                next += 1;
            }
        }
    }
    let mut nodes: Vec<Option<TreeNode>> = vec![None; order.len()];
    for (pos, (g, parent)) in order.iter().enumerate() {
        nodes[index_of[pos]] = Some(TreeNode {
            index: index_of[pos],
            formula: (*g).clone(),
            kind: kind_of(g),
            parent: parent.map(|p| index_of[p]),
            children: Vec::new(),
        });
    }
    let mut nodes: Vec<TreeNode> = nodes.into_iter().map(Option::unwrap).collect();
    for (pos, (_, parent)) in order.iter().enumerate() {
        if let Some(p) = parent {
            let child = index_of[pos];
            nodes[index_of[*p]].children.push(child);
        }
    }
    Ok(Tree { nodes })
}

/// Per-node `t*` choices for eventually nodes; unlisted nodes use `t* = t_b`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default)]
    pub t_star: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeTiming {
    pub active: f64,
    pub terminal: f64,
    /// Set for temporal nodes.
    pub t_star: Option<f64>,
    /// Set for leaves.
    pub release: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchTime {
    pub time: f64,
    /// True if some leaf is released at this time.
    pub release: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedTree {
    pub tree: Tree,
    pub timings: Vec<NodeTiming>,
    pub horizon: f64,
    pub switching: Vec<SwitchTime>,
}

/// Assigns active, terminal and release times top-down from `active = 0` at the root.
pub fn assign_times(tree: &Tree, cfg: &TimingConfig) -> Result<TimedTree, TreeError> {
    for &index in cfg.t_star.keys() {
        let node = tree.node(index)?;
        if !matches!(node.kind, NodeKind::Temporal { op: TemporalOp::Eventually, .. }) {
            return Err(TreeError::TStarNotEventually { index });
        }
    }
    let mut timings = vec![NodeTiming { active: 0.0, terminal: 0.0, t_star: None, release: None }; tree.len()];
    let mut stack = vec![(0usize, 0.0f64, 0.0f64)];
    while let Some((k, active, path_sum)) = stack.pop() {
        let node = &tree.nodes[k];
        let (terminal, t_star, below) = match node.kind {
            NodeKind::Temporal { op, interval } => {
                let t_star = match op {
                    TemporalOp::Always => interval.start(),
                    TemporalOp::Eventually => {
                        let ts = cfg.t_star.get(&k).copied().unwrap_or(interval.end());
                        if !(ts >= interval.start() && ts <= interval.end()) {
                            return Err(TreeError::TStarOutOfRange { index: k, t_star: ts, interval });
                        }
                        ts
                    }
                };
                (active + t_star, Some(t_star), path_sum + interval.end())
            }
            NodeKind::Conjunction => (active, None, path_sum),
            NodeKind::Leaf(_) => (active, None, path_sum),
        };
        timings[k] = NodeTiming {
            active,
            terminal,
            t_star,
            release: node.is_leaf().then_some(path_sum),
        };
        for &c in &node.children {
            stack.push((c, terminal, below));
        }
    }
    let horizon = timings.iter().filter_map(|t| t.release).fold(0.0, f64::max);
    let mut switching: Vec<SwitchTime> = Vec::new();
    let mut push = |time: f64, release: bool| match switching.iter_mut().find(|s| s.time == time) {
        Some(s) => s.release |= release,
        None => switching.push(SwitchTime { time, release }),
    };
    push(0.0, false);
    for t in &timings {
        push(t.active, false);
        push(t.terminal, false);
        if let Some(r) = t.release {
            push(r, true);
        }
    }
    switching.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(TimedTree { tree: tree.clone(), timings, horizon, switching })
}

/// Leaf index to release time.
pub fn release_times(timed: &TimedTree) -> BTreeMap<usize, f64> {
    timed
        .timings
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.release.map(|r| (k, r)))
        .collect()
}

pub fn switching_sequence(timed: &TimedTree) -> &[SwitchTime] {
    &timed.switching
}

impl TimedTree {
    pub fn timing(&self, index: usize) -> Result<&NodeTiming, TreeError> {
        self.timings.get(index).ok_or(TreeError::UnknownNode(index))
    }

    /// Switching times tagged as releases, excluding zero.
    pub fn release_instants(&self) -> Vec<f64> {
        self.switching.iter().filter(|s| s.release && s.time > 0.0).map(|s| s.time).collect()
    }

    /// Indented text rendering, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(0, 0, &mut out);
        let seq: Vec<String> = self
            .switching
            .iter()
            .map(|s| if s.release { format!("{}*", s.time) } else { s.time.to_string() })
            .collect();
        let _ = writeln!(out, "horizon {}", self.horizon);
        let _ = writeln!(out, "switching [{}] (* = release)", seq.join(", "));
        out
    }

    fn render_node(&self, k: usize, depth: usize, out: &mut String) {
        let node = &self.tree.nodes[k];
        let t = &self.timings[k];
        let label = match &node.kind {
            NodeKind::Temporal { op, interval } => format!("{}{}", op.symbol(), interval),
            NodeKind::Conjunction => "&".to_string(),
            NodeKind::Leaf(Leaf::Predicate(n)) => n.clone(),
            NodeKind::Leaf(Leaf::True) => "T".to_string(),
        };
        let _ = write!(out, "{:indent$}[{k}] {label}  active {} terminal {}", "", t.active, t.terminal, indent = 2 * depth);
        if let Some(r) = t.release {
            let _ = write!(out, " release {r}");
        }
        out.push('\n');
        for &c in &node.children {
            self.render_node(c, depth + 1, out);
        }
    }
}
