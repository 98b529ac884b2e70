//! Rewriting arbitrary formulas into the tree-compatible normal form.
//!
//! The normal form has no `U`, no boolean operators applied directly to
//! predicates, no `G` over a conjunction (nor sibling `G[I] mu1 & G[I] mu2`),
//! and no two identical temporal operators in a row. Every rewrite is sound:
//! a signal satisfying the output satisfies the input. The converse does not
//! hold in general; predicate folding and the `G F` split both strengthen.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::stl::{Formula, Interval, PredicateDef, PredicateError, PredicateTable, Shape, TemporalOp};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("invalid split for `{pattern}`: {reason}")]
    InvalidSplit { pattern: String, reason: String },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error("smooth conjunction sharpness must be positive, got {0}")]
    BadKappa(f64),
}

/// Explicit split of one `G[a1,b1] F[a2,b2] psi` occurrence into `p_f` point deadlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitOverride {
    pub p_f: usize,
    pub deltas: Vec<f64>,
}

/// How `G F` patterns are split. Patterns without an override use the
/// minimal count with evenly spaced deadlines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GfSplit {
    /// Keyed by the formatted text of the `G F` occurrence, e.g. `G[0,10] F[0,5] mu3`.
    pub overrides: BTreeMap<String, SplitOverride>,
}

impl Serialize for GfSplit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.overrides.is_empty() {
            s.serialize_str("auto")
        } else {
            self.overrides.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for GfSplit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Keyword(String),
            Map(BTreeMap<String, SplitOverride>),
        }
        match Repr::deserialize(d)? {
            Repr::Keyword(k) if k == "auto" => Ok(GfSplit::default()),
            Repr::Keyword(k) => Err(serde::de::Error::custom(format!("unknown gf_split policy `{k}`"))),
            Repr::Map(overrides) => Ok(GfSplit { overrides }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    /// Sharpness of the smooth minimum used when folding predicate conjunctions.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub gf_split: GfSplit,
}

fn default_kappa() -> f64 {
    10.0
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self { kappa: default_kappa(), gf_split: GfSplit::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleId {
    /// `p U[a,b] q` becomes `G[0,b] p & F[a,b] q`.
    Until,
    /// Negated predicates and predicate conjunctions become single predicates.
    FoldPredicates,
    /// `G(p & q)` becomes `G p & G q`; sibling `G[I]` predicates are regrouped.
    DistributeAlways,
    /// `T[a1,b1] T[a2,b2] p` becomes `T[a1+a2,b1+b2] p`.
    MergeNested,
    /// `G F p` becomes a conjunction of point deadlines `F[w,w] p`.
    SplitAlwaysEventually,
    /// Nested conjunctions are flattened.
    FlattenAnd,
    /// Conjuncts and temporal bodies equal to `T` are removed.
    DropTrue,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleId::Until => "rule-1 until",
            RuleId::FoldPredicates => "rule-2 fold-predicates",
            RuleId::DistributeAlways => "rule-3 distribute-always",
            RuleId::MergeNested => "rule-4 merge-nested",
            RuleId::SplitAlwaysEventually => "rule-5 split-always-eventually",
            RuleId::FlattenAnd => "flatten-and",
            RuleId::DropTrue => "drop-true",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rule: RuleId,
    pub source: Formula,
    pub result: Formula,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformTrace {
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("trace entry {index} does not match any subformula")]
pub struct ReplayError {
    pub index: usize,
}

impl TransformTrace {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Re-applies each recorded rewrite to the first matching subformula (pre-order).
    pub fn replay(&self, input: &Formula) -> Result<Formula, ReplayError> {
        let mut current = input.clone();
        for (index, entry) in self.entries.iter().enumerate() {
            current = replace_first(&current, &entry.source, &entry.result).ok_or(ReplayError { index })?;
        }
        Ok(current)
    }
}

fn replace_first(f: &Formula, from: &Formula, to: &Formula) -> Option<Formula> {
    if f == from {
        return Some(to.clone());
    }
    match f {
        Formula::True | Formula::Pred(_) | Formula::NotPred(_) => None,
        Formula::And(parts) => parts.iter().enumerate().find_map(|(k, p)| {
            replace_first(p, from, to).map(|np| {
                let mut parts = parts.clone();
                parts[k] = np;
                Formula::And(parts)
            })
        }),
        Formula::Always(i, b) => replace_first(b, from, to).map(|nb| Formula::always(*i, nb)),
        Formula::Eventually(i, b) => replace_first(b, from, to).map(|nb| Formula::eventually(*i, nb)),
        Formula::Until(i, l, r) => replace_first(l, from, to)
            .map(|nl| Formula::until(*i, nl, (**r).clone()))
            .or_else(|| replace_first(r, from, to).map(|nr| Formula::until(*i, (**l).clone(), nr))),
    }
}

/// Output of [`to_desired_form`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredForm {
    pub formula: Formula,
    /// Input table plus every predicate generated by folding.
    pub predicates: PredicateTable,
    pub trace: TransformTrace,
    pub warnings: Vec<String>,
}

/// A reason a formula is not in the normal form.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UntilPresent(Formula),
    LogicOnPredicate(Formula),
    DistributableAlways(Formula),
    IdenticalNestedTemporal(Formula),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UntilPresent(s) => write!(f, "until operator present: {s}"),
            Violation::LogicOnPredicate(s) => write!(f, "logic applied directly to predicates: {s}"),
            Violation::DistributableAlways(s) => write!(f, "always over a conjunction: {s}"),
            Violation::IdenticalNestedTemporal(s) => write!(f, "identical consecutive temporal operators: {s}"),
        }
    }
}

/// Lists every normal-form violation in `f`; empty means the tree can be built.
pub fn check_desired_form(f: &Formula) -> Vec<Violation> {
    let mut out = Vec::new();
    check_node(f, &mut out);
    out
}

fn check_node(f: &Formula, out: &mut Vec<Violation>) {
    match f {
        Formula::Until(..) => out.push(Violation::UntilPresent(f.clone())),
        Formula::NotPred(_) => out.push(Violation::LogicOnPredicate(f.clone())),
        Formula::And(parts) => {
            if parts.iter().filter(|p| matches!(p, Formula::Pred(_))).count() >= 2 {
                out.push(Violation::LogicOnPredicate(f.clone()));
            }
            if has_groupable_always(parts) {
                out.push(Violation::DistributableAlways(f.clone()));
            }
        }
        Formula::Always(_, body) if matches!(**body, Formula::And(_)) => {
            out.push(Violation::DistributableAlways(f.clone()));
        }
        _ => {}
    }
    if let Some((op, _, body)) = f.as_temporal() {
        if body.as_temporal().is_some_and(|(inner, _, _)| inner == op) {
            out.push(Violation::IdenticalNestedTemporal(f.clone()));
        }
    }
    for c in f.children() {
        check_node(c, out);
    }
}

fn always_pred_interval(f: &Formula) -> Option<Interval> {
    match f {
        Formula::Always(i, body) if matches!(**body, Formula::Pred(_)) => Some(*i),
        _ => None,
    }
}

fn has_groupable_always(parts: &[Formula]) -> bool {
    let ivs: Vec<Interval> = parts.iter().filter_map(always_pred_interval).collect();
    ivs.iter().enumerate().any(|(k, a)| ivs[k + 1..].contains(a))
}

type LocalRule = fn(&mut Rewriter, &Formula) -> Result<Option<Formula>, TransformError>;

struct Rewriter {
    table: PredicateTable,
    cfg: TransformConfig,
    trace: TransformTrace,
    warnings: Vec<String>,
}

impl Rewriter {
    fn new(table: &PredicateTable, cfg: &TransformConfig) -> Result<Self, TransformError> {
        if !(cfg.kappa.is_finite() && cfg.kappa > 0.0) {
            return Err(TransformError::BadKappa(cfg.kappa));
        }
        Ok(Self { table: table.clone(), cfg: cfg.clone(), trace: TransformTrace::default(), warnings: Vec::new() })
    }

    /// Rebuilds `f` bottom-up, offering every rebuilt node to `local` once.
    fn pass(&mut self, f: &Formula, rule: RuleId, local: LocalRule) -> Result<Formula, TransformError> {
        let rebuilt = match f {
            Formula::True | Formula::Pred(_) | Formula::NotPred(_) => f.clone(),
            Formula::And(parts) => {
                Formula::And(parts.iter().map(|p| self.pass(p, rule, local)).collect::<Result<_, _>>()?)
            }
            Formula::Always(i, b) => Formula::always(*i, self.pass(b, rule, local)?),
            Formula::Eventually(i, b) => Formula::eventually(*i, self.pass(b, rule, local)?),
            Formula::Until(i, l, r) => Formula::until(*i, self.pass(l, rule, local)?, self.pass(r, rule, local)?),
        };
        match local(self, &rebuilt)? {
            Some(result) => {
                self.trace.entries.push(TraceEntry { rule, source: rebuilt, result: result.clone() });
                Ok(result)
            }
            None => Ok(rebuilt),
        }
    }

    fn predicate_shape(&self, name: &str) -> Result<Shape, TransformError> {
        Ok(self.table.get(name)?.shape.clone())
    }

    /// Registers `shape` under `preferred`, or reuses an existing predicate with the same shape.
    fn register(&mut self, preferred: &str, shape: Shape) -> Result<String, TransformError> {
        if let Some(existing) = self.table.iter().find(|d| d.shape == shape && d.name.starts_with(preferred)) {
            return Ok(existing.name.clone());
        }
        let mut name = preferred.to_string();
        let mut k = 2;
        while self.table.contains(&name) {
            name = format!("{preferred}_{k}");
            k += 1;
        }
        self.table.insert(PredicateDef::new(name.clone(), shape)?)?;
        Ok(name)
    }

    fn register_and(&mut self, shape: Shape) -> Result<String, TransformError> {
        if let Some(existing) = self
            .table
            .iter()
            .find(|d| d.shape == shape && is_generated_and(&d.name))
        {
            return Ok(existing.name.clone());
        }
        let mut n = 1;
        while self.table.contains(&format!("and_{n}")) {
            n += 1;
        }
        let name = format!("and_{n}");
        self.table.insert(PredicateDef::new(name.clone(), shape)?)?;
        Ok(name)
    }

    fn fold_group(&mut self, names: &[&str]) -> Result<String, TransformError> {
        let parts = names.iter().map(|n| self.predicate_shape(n)).collect::<Result<Vec<_>, _>>()?;
        self.register_and(Shape::SmoothAnd { parts, kappa: self.cfg.kappa })
    }

    /// Rules 1 to 4 plus conjunction clean-up, iterated until nothing changes.
    fn normalize(&mut self, mut f: Formula) -> Result<Formula, TransformError> {
        loop {
            let mut g = self.pass(&f, RuleId::Until, rule_until)?;
            g = self.pass(&g, RuleId::DropTrue, rule_drop_true)?;
            g = self.pass(&g, RuleId::FoldPredicates, rule_fold)?;
            g = self.pass(&g, RuleId::FlattenAnd, rule_flatten)?;
            g = self.pass(&g, RuleId::DistributeAlways, rule_distribute)?;
            g = self.pass(&g, RuleId::FlattenAnd, rule_flatten)?;
            g = self.pass(&g, RuleId::MergeNested, rule_merge)?;
            if g == f {
                return Ok(g);
            }
            f = g;
        }
    }

    fn run(&mut self, f: &Formula) -> Result<Formula, TransformError> {
        let mut current = f.clone();
        loop {
            let normal = self.normalize(current)?;
            let split = self.pass(&normal, RuleId::SplitAlwaysEventually, rule_split)?;
            if split == normal {
                return Ok(normal);
            }
            current = split;
        }
    }
}

fn is_generated_and(name: &str) -> bool {
    name.strip_prefix("and_").is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

fn rule_until(_: &mut Rewriter, f: &Formula) -> Result<Option<Formula>, TransformError> {
    Ok(match f {
        Formula::Until(i, lhs, rhs) => Some(Formula::And(vec![
            Formula::always(Interval::of(0.0, i.end()), (**lhs).clone()),
            Formula::eventually(*i, (**rhs).clone()),
        ])),
        _ => None,
    })
}

fn rule_drop_true(_: &mut Rewriter, f: &Formula) -> Result<Option<Formula>, TransformError> {
    Ok(match f {
        Formula::Always(_, b) | Formula::Eventually(_, b) if **b == Formula::True => Some(Formula::True),
        Formula::And(parts) if parts.contains(&Formula::True) => {
            let mut kept: Vec<Formula> = parts.iter().filter(|p| **p != Formula::True).cloned().collect();
            Some(match kept.len() {
                0 => Formula::True,
                1 => kept.pop().unwrap(),
                _ => Formula::And(kept),
            })
        }
        _ => None,
    })
}

fn rule_fold(rw: &mut Rewriter, f: &Formula) -> Result<Option<Formula>, TransformError> {
    match f {
        Formula::NotPred(name) => {
            let inner = rw.predicate_shape(name)?;
            let folded = rw.register(&format!("not_{name}"), Shape::Negated { inner: Box::new(inner) })?;
            Ok(Some(Formula::Pred(folded)))
        }
        Formula::And(parts) => {
            let names: Vec<&str> = parts
                .iter()
                .filter_map(|p| match p {
                    Formula::Pred(n) => Some(n.as_str()),
                    _ => None,
                })
                .collect();
            if names.len() < 2 {
                return Ok(None);
            }
            let folded = Formula::Pred(rw.fold_group(&names)?);
            if names.len() == parts.len() {
                return Ok(Some(folded));
            }
            let mut out = Vec::with_capacity(parts.len() - names.len() + 1);
            let mut placed = false;
            for p in parts {
                if matches!(p, Formula::Pred(_)) {
                    if !placed {
                        out.push(folded.clone());
                        placed = true;
                    }
                } else {
                    out.push(p.clone());
                }
            }
            Ok(Some(Formula::And(out)))
        }
        _ => Ok(None),
    }
}

fn rule_flatten(_: &mut Rewriter, f: &Formula) -> Result<Option<Formula>, TransformError> {
    Ok(match f {
        Formula::And(parts) if parts.iter().any(|p| matches!(p, Formula::And(_))) => {
            let mut flat = Vec::new();
            for p in parts {
                match p {
                    Formula::And(inner) => flat.extend(inner.iter().cloned()),
                    other => flat.push(other.clone()),
                }
            }
            Some(Formula::And(flat))
        }
        _ => None,
    })
}

fn rule_distribute(rw: &mut Rewriter, f: &Formula) -> Result<Option<Formula>, TransformError> {
    match f {
        Formula::Always(i, body) => match body.as_ref() {
            Formula::And(parts) => Ok(Some(Formula::And(
                parts.iter().map(|p| Formula::always(*i, p.clone())).collect(),
            ))),
            _ => Ok(None),
        },
        Formula::And(parts) if has_groupable_always(parts) => {
            // Regroup `G[I] mu1 & G[I] mu2` into `G[I] and_k`.
            let mut out: Vec<Formula> = Vec::with_capacity(parts.len());
            let mut done: Vec<Interval> = Vec::new();
            for p in parts {
                let Some(iv) = always_pred_interval(p) else {
                    out.push(p.clone());
                    continue;
                };
                if done.contains(&iv) {
                    continue;
                }
                let names: Vec<&str> = parts
                    .iter()
                    .filter(|q| always_pred_interval(q) == Some(iv))
                    .map(|q| match q {
                        Formula::Always(_, b) => match b.as_ref() {
                            Formula::Pred(n) => n.as_str(),
                            _ => unreachable!(),
                        },
                        _ => unreachable!(),
                    })
                    .collect();
                done.push(iv);
                if names.len() == 1 {
                    out.push(p.clone());
                } else {
                    out.push(Formula::always(iv, Formula::Pred(rw.fold_group(&names)?)));
                }
            }
            Ok(Some(if out.len() == 1 { out.pop().unwrap() } else { Formula::And(out) }))
        }
        _ => Ok(None),
    }
}

fn rule_merge(_: &mut Rewriter, f: &Formula) -> Result<Option<Formula>, TransformError> {
    if let Some((op, outer, body)) = f.as_temporal() {
        if let Some((inner_op, inner, inner_body)) = body.as_temporal() {
            if op == inner_op {
                return Ok(Some(Formula::temporal(op, outer.shifted_by(inner), inner_body.clone())));
            }
        }
    }
    Ok(None)
}

fn rule_split(rw: &mut Rewriter, f: &Formula) -> Result<Option<Formula>, TransformError> {
    let Formula::Always(outer, body) = f else { return Ok(None) };
    let Formula::Eventually(inner, psi) = body.as_ref() else { return Ok(None) };
    let key = f.to_string();
    if inner.is_point() {
        rw.warnings.push(format!("`{key}`: eventually window is a single instant, split not applicable"));
        return Ok(None);
    }
    let over = rw.cfg.gf_split.overrides.get(&key).cloned();
    let deadlines = split_deadlines(outer, inner, over.as_ref()).map_err(|reason| TransformError::InvalidSplit {
        pattern: key,
        reason,
    })?;
    let mut conj: Vec<Formula> = deadlines
        .into_iter()
        .map(|w| Formula::eventually(Interval::of(w, w), (**psi).clone()))
        .collect();
    Ok(Some(if conj.len() == 1 { conj.pop().unwrap() } else { Formula::And(conj) }))
}

/// Minimum admissible number of deadlines for `G[outer] F[inner]`.
pub fn min_split_count(outer: &Interval, inner: &Interval) -> usize {
    let ratio = outer.length() / inner.length();
    ((ratio - 1e-9).ceil().max(1.0)) as usize
}

/// Point deadlines `w_1..w_p` for `G[outer] F[inner]` via `w_i = w_{i-1} + delta_i (b2 - a2)`,
/// `w_0 = a1 + a2`. Without an override the minimal count and the smallest
/// admissible step are used.
pub fn split_deadlines(
    outer: &Interval,
    inner: &Interval,
    over: Option<&SplitOverride>,
) -> Result<Vec<f64>, String> {
    let width = inner.length();
    if width <= 0.0 {
        return Err("eventually window must have positive length".into());
    }
    let p_min = min_split_count(outer, inner);
    let (p_f, deltas) = match over {
        Some(o) => {
            if o.p_f < p_min {
                return Err(format!("p_f = {} is below the minimum {p_min}", o.p_f));
            }
            if o.deltas.len() != o.p_f {
                return Err(format!("expected {} deltas, got {}", o.p_f, o.deltas.len()));
            }
            (o.p_f, o.deltas.clone())
        }
        None => {
            let lower = outer.length() / (p_min as f64 * width);
            (p_min, vec![lower; p_min])
        }
    };
    let lower = outer.length() / (p_f as f64 * width);
    let tol = 1e-12;
    for (k, &d) in deltas.iter().enumerate() {
        if !d.is_finite() || d < lower - tol {
            return Err(format!("delta_{} = {d} below admissible range [{lower}, 1]", k + 1));
        }
        if d > 1.0 + tol {
            return Err(format!("delta_{} = {d} above admissible range [{lower}, 1]", k + 1));
        }
    }
    let mut w = outer.start() + inner.start();
    let mut out = Vec::with_capacity(p_f);
    for d in deltas {
        w += d * width;
        out.push(w);
    }
    let last_allowed = outer.end() + inner.end();
    if let Some(&last) = out.last() {
        if last > last_allowed + 1e-9 {
            return Err(format!("last deadline {last} exceeds {last_allowed}"));
        }
    }
    Ok(out)
}

fn run_single(
    f: &Formula,
    table: &PredicateTable,
    cfg: &TransformConfig,
    rule: RuleId,
    local: LocalRule,
) -> Result<(Formula, PredicateTable), TransformError> {
    let mut rw = Rewriter::new(table, cfg)?;
    let out = rw.pass(f, rule, local)?;
    Ok((out, rw.table))
}

/// Rule 1 applied everywhere, innermost first.
pub fn rewrite_until(f: &Formula) -> Formula {
    let mut rw = Rewriter::new(&PredicateTable::new(), &TransformConfig::default()).expect("default config");
    rw.pass(f, RuleId::Until, rule_until).expect("until rewriting cannot fail")
}

/// Rule 2: negated predicates and predicate-only conjunction groups become
/// single predicates registered in the returned table.
pub fn fold_predicates(
    f: &Formula,
    table: &PredicateTable,
    cfg: &TransformConfig,
) -> Result<(Formula, PredicateTable), TransformError> {
    run_single(f, table, cfg, RuleId::FoldPredicates, rule_fold)
}

/// Rule 3, followed by regrouping of same-interval `G` predicates so no
/// `G[I] mu1 & G[I] mu2` remains.
pub fn distribute_always(
    f: &Formula,
    table: &PredicateTable,
    cfg: &TransformConfig,
) -> Result<(Formula, PredicateTable), TransformError> {
    let mut rw = Rewriter::new(table, cfg)?;
    let mut current = f.clone();
    loop {
        let mut g = rw.pass(&current, RuleId::FoldPredicates, rule_fold)?;
        g = rw.pass(&g, RuleId::DistributeAlways, rule_distribute)?;
        g = rw.pass(&g, RuleId::FlattenAnd, rule_flatten)?;
        if g == current {
            return Ok((g, rw.table));
        }
        current = g;
    }
}

/// Rule 4 to fixpoint.
pub fn merge_nested_identical(f: &Formula) -> Formula {
    let mut rw = Rewriter::new(&PredicateTable::new(), &TransformConfig::default()).expect("default config");
    rw.pass(f, RuleId::MergeNested, rule_merge).expect("merging cannot fail")
}

/// Rule 5 on every `G F` occurrence. Returns the rewritten formula and warnings
/// for occurrences the rule does not apply to.
pub fn split_always_eventually(
    f: &Formula,
    cfg: &TransformConfig,
) -> Result<(Formula, Vec<String>), TransformError> {
    let mut rw = Rewriter::new(&PredicateTable::new(), cfg)?;
    let out = rw.pass(f, RuleId::SplitAlwaysEventually, rule_split)?;
    Ok((out, rw.warnings))
}

/// Full pipeline: rules 1 to 4 to fixpoint, then rule 5, repeated until stable.
pub fn to_desired_form(
    f: &Formula,
    table: &PredicateTable,
    cfg: &TransformConfig,
) -> Result<DesiredForm, TransformError> {
    let mut rw = Rewriter::new(table, cfg)?;
    let formula = rw.run(f)?;
    debug_assert!(check_desired_form(&formula).is_empty(), "{formula}");
    let mut warnings = rw.warnings;
    warnings.dedup();
    Ok(DesiredForm { formula, predicates: rw.table, trace: rw.trace, warnings })
}

/// Operator of a temporal node, for callers that only hold a reference.
pub fn temporal_op(f: &Formula) -> Option<TemporalOp> {
    f.as_temporal().map(|(op, _, _)| op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse_formula;

    fn table() -> PredicateTable {
        let mut t = PredicateTable::new();
        for (k, name) in ["mu1", "mu2", "mu3", "mu4", "mu5"].iter().enumerate() {
            t = t.with(name, Shape::Ball { center: vec![k as f64, 0.0], radius: 1.0 }).unwrap();
        }
        t
    }

    fn p(text: &str) -> Formula {
        parse_formula(text, &table()).unwrap()
    }

    #[test]
    fn until_becomes_always_and_eventually() {
        assert_eq!(rewrite_until(&p("mu3 U[1,2] mu1")), p("G[0,2] mu3 & F[1,2] mu1"));
        assert_eq!(rewrite_until(&p("G[0,5] F[1,2] mu1")), p("G[0,5] F[1,2] mu1"));
    }

    #[test]
    fn nested_until_rewrites_bottom_up() {
        let out = rewrite_until(&p("(mu1 U[0,1] mu2) U[2,3] mu3"));
        assert_eq!(out, p("G[0,3] (G[0,1] mu1 & F[0,1] mu2) & F[2,3] mu3"));
    }

    #[test]
    fn fold_negation_and_conjunction() {
        let cfg = TransformConfig::default();
        let (out, tab) = fold_predicates(&p("!mu4"), &table(), &cfg).unwrap();
        assert_eq!(out, Formula::pred("not_mu4"));
        let x = [0.5, 0.5];
        let neg = tab.get("not_mu4").unwrap().eval(&x).unwrap();
        assert_eq!(neg, -tab.get("mu4").unwrap().eval(&x).unwrap());

        let (out, tab) = fold_predicates(&p("mu1 & mu2"), &table(), &cfg).unwrap();
        assert_eq!(out, Formula::pred("and_1"));
        let h1 = tab.get("mu1").unwrap().eval(&x).unwrap();
        let h2 = tab.get("mu2").unwrap().eval(&x).unwrap();
        let folded = tab.get("and_1").unwrap().eval(&x).unwrap();
        let expected = crate::smooth::smooth_min(&[h1, h2], cfg.kappa).unwrap().value;
        assert_eq!(folded, expected);

        let mixed = p("mu1 & G[0,1] mu2");
        assert_eq!(fold_predicates(&mixed, &table(), &cfg).unwrap().0, mixed);
    }

    #[test]
    fn distribute_always_cases() {
        let cfg = TransformConfig::default();
        let (out, _) = distribute_always(&p("G[0,5] (mu1 & F[0,1] mu2)"), &table(), &cfg).unwrap();
        assert_eq!(out, p("G[0,5] mu1 & G[0,5] F[0,1] mu2"));
        let (out, _) = distribute_always(&p("G[0,5] mu1"), &table(), &cfg).unwrap();
        assert_eq!(out, p("G[0,5] mu1"));
        let (out, tab) = distribute_always(&p("G[0,5] (mu1 & mu2)"), &table(), &cfg).unwrap();
        assert_eq!(out, Formula::always(Interval::of(0.0, 5.0), Formula::pred("and_1")));
        assert!(matches!(tab.get("and_1").unwrap().shape, Shape::SmoothAnd { .. }));
        let (out, _) = distribute_always(&p("G[0,5] mu1 & G[0,5] mu2 & G[0,4] mu3"), &table(), &cfg).unwrap();
        assert_eq!(
            out,
            Formula::And(vec![
                Formula::always(Interval::of(0.0, 5.0), Formula::pred("and_1")),
                Formula::always(Interval::of(0.0, 4.0), Formula::pred("mu3")),
            ])
        );
    }

    #[test]
    fn merge_identical_operators() {
        assert_eq!(merge_nested_identical(&p("G[0,5] G[1,2] mu1")), p("G[1,7] mu1"));
        assert_eq!(merge_nested_identical(&p("F[1,1] F[2,2] mu1")), p("F[3,3] mu1"));
        assert_eq!(merge_nested_identical(&p("G[0,5] F[1,2] mu1")), p("G[0,5] F[1,2] mu1"));
        assert_eq!(merge_nested_identical(&p("G[0,1] G[0,1] G[0,1] mu1")), p("G[0,3] mu1"));
    }

    #[test]
    fn split_auto_policy() {
        let cfg = TransformConfig::default();
        let (out, _) = split_always_eventually(&p("G[0,15] F[2,5] mu1"), &cfg).unwrap();
        assert_eq!(out, p("F[5,5] mu1 & F[8,8] mu1 & F[11,11] mu1 & F[14,14] mu1 & F[17,17] mu1"));
        let (out, _) = split_always_eventually(&p("G[0,10] F[0,5] mu3"), &cfg).unwrap();
        assert_eq!(out, p("F[5,5] mu3 & F[10,10] mu3"));
    }

    #[test]
    fn split_rejects_small_delta() {
        let mut cfg = TransformConfig::default();
        cfg.gf_split.overrides.insert(
            "G[0,10] F[0,5] mu3".into(),
            SplitOverride { p_f: 2, deltas: vec![0.5, 1.0] },
        );
        let err = split_always_eventually(&p("G[0,10] F[0,5] mu3"), &cfg).unwrap_err();
        assert!(matches!(err, TransformError::InvalidSplit { ref reason, .. } if reason.contains("below admissible")));
        cfg.gf_split.overrides.insert(
            "G[0,10] F[0,5] mu3".into(),
            SplitOverride { p_f: 1, deltas: vec![1.0] },
        );
        assert!(split_always_eventually(&p("G[0,10] F[0,5] mu3"), &cfg).is_err());
        cfg.gf_split.overrides.insert(
            "G[0,10] F[0,5] mu3".into(),
            SplitOverride { p_f: 3, deltas: vec![0.8, 0.8, 0.8] },
        );
        let (out, _) = split_always_eventually(&p("G[0,10] F[0,5] mu3"), &cfg).unwrap();
        assert_eq!(out, p("F[4,4] mu3 & F[8,8] mu3 & F[12,12] mu3"));
    }

    #[test]
    fn split_point_window_warns_and_keeps_formula() {
        let (out, warnings) = split_always_eventually(&p("G[0,10] F[3,3] mu3"), &TransformConfig::default()).unwrap();
        assert_eq!(out, p("G[0,10] F[3,3] mu3"));
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn reach_avoid_task_reaches_expected_structure() {
        let f = p("G[0,10] F[0,5] mu3 & F[5,6] G[1,2] mu2 & F[12,13] (mu3 U[1,2] mu1) & G[0,24] !mu4 & F[0,24] mu5");
        let out = to_desired_form(&f, &table(), &TransformConfig::default()).unwrap();
        let expected = p("F[5,5] mu3 & F[10,10] mu3 & F[5,6] G[1,2] mu2 & F[12,13] (G[0,2] mu3 & F[1,2] mu1) & F[0,24] mu5");
        let Formula::And(mut expected_parts) = expected else { panic!() };
        expected_parts.insert(4, Formula::always(Interval::of(0.0, 24.0), Formula::pred("not_mu4")));
        assert_eq!(out.formula, Formula::And(expected_parts));
        assert!(check_desired_form(&out.formula).is_empty());
        assert_eq!(out.trace.replay(&f).unwrap(), out.formula);
        assert!(out.predicates.contains("not_mu4"));
    }

    #[test]
    fn desired_input_is_a_fixpoint() {
        let f = p("G[0,2] mu3 & F[1,2] mu1");
        let out = to_desired_form(&f, &table(), &TransformConfig::default()).unwrap();
        assert_eq!(out.formula, f);
        assert!(out.trace.is_empty());
        let t = to_desired_form(&Formula::True, &table(), &TransformConfig::default()).unwrap();
        assert_eq!(t.formula, Formula::True);
    }

    #[test]
    fn eventually_as_true_until() {
        let out = to_desired_form(&p("T U[1,3] mu1"), &table(), &TransformConfig::default()).unwrap();
        assert_eq!(out.formula, p("F[1,3] mu1"));
    }

    #[test]
    fn violations_are_listed() {
        assert!(check_desired_form(&p("G[0,2] mu3 & F[1,2] mu1")).is_empty());
        assert!(matches!(check_desired_form(&p("mu1 U[0,1] mu2"))[..], [Violation::UntilPresent(_)]));
        assert!(matches!(
            check_desired_form(&p("G[0,5] G[1,2] mu1"))[..],
            [Violation::IdenticalNestedTemporal(_)]
        ));
        assert!(matches!(check_desired_form(&p("F[0,1] !mu1"))[..], [Violation::LogicOnPredicate(_)]));
        assert!(matches!(check_desired_form(&p("G[0,1] (mu1 & F[0,1] mu2)"))[..], [Violation::DistributableAlways(_)]));
        assert!(!check_desired_form(&p("G[0,1] mu1 & G[0,1] mu2")).is_empty());
    }

    #[test]
    fn bad_kappa_is_rejected() {
        let cfg = TransformConfig { kappa: 0.0, ..Default::default() };
        assert_eq!(to_desired_form(&p("mu1"), &table(), &cfg).unwrap_err(), TransformError::BadKappa(0.0));
    }

    #[test]
    fn gf_split_json() {
        let auto: TransformConfig = serde_json::from_str(r#"{"kappa": 5, "gf_split": "auto"}"#).unwrap();
        assert!(auto.gf_split.overrides.is_empty());
        let with: TransformConfig =
            serde_json::from_str(r#"{"gf_split": {"G[0,10] F[0,5] mu3": {"p_f": 2, "deltas": [1, 1]}}}"#).unwrap();
        assert_eq!(with.kappa, 10.0);
        assert_eq!(with.gf_split.overrides.len(), 1);
        assert!(serde_json::from_str::<TransformConfig>(r#"{"gf_split": "never"}"#).is_err());
    }
}
