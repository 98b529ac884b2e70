//! Offline evaluation of formulas over sampled trajectories.
//!
//! Dense-time quantifiers range over the sample times inside the window plus
//! the two window endpoints, where the state is linearly interpolated.

use std::io::Read;

use serde::Serialize;

use crate::stl::{Formula, PredicateError, PredicateTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("a signal needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample times must be finite and strictly increasing (sample {0})")]
    NotIncreasing(usize),
    #[error("sample {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("window [{from}, {to}] exceeds the signal domain [{start}, {end}]")]
    OutOfDomain { from: f64, to: f64, start: f64, end: f64 },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error("malformed trajectory csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub satisfied: bool,
    pub robustness: f64,
}

/// Strictly increasing sample times with one state vector each.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

const DOMAIN_TOL: f64 = 1e-9;

impl SampledSignal {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self, MonitorError> {
        if times.len() < 2 || times.len() != states.len() {
            return Err(MonitorError::TooFewSamples(times.len().min(states.len())));
        }
        for k in 0..times.len() {
            if !times[k].is_finite() || (k > 0 && times[k] <= times[k - 1]) {
                return Err(MonitorError::NotIncreasing(k));
            }
            if states[k].len() != states[0].len() {
                return Err(MonitorError::DimensionMismatch { index: k, expected: states[0].len(), got: states[k].len() });
            }
        }
        Ok(Self { times, states })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Linearly interpolated state; exact at sample times.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        let i = k - 1;
        if self.times[i] == t || i + 1 == self.times.len() {
            return self.states[i].clone();
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.states[i].iter().zip(&self.states[i + 1]).map(|(a, b)| a + w * (b - a)).collect()
    }

    fn check_window(&self, from: f64, to: f64) -> Result<(f64, f64), MonitorError> {
        let (start, end) = (self.start(), self.end());
        let tol = DOMAIN_TOL * end.abs().max(1.0);
        if from < start - tol || to > end + tol {
            return Err(MonitorError::OutOfDomain { from, to, start, end });
        }
        Ok((from.max(start), to.min(end)))
    }

    /// Endpoints of `[from, to]` plus every sample time strictly inside, sorted.
    pub fn window(&self, from: f64, to: f64) -> Result<Vec<f64>, MonitorError> {
        let (from, to) = self.check_window(from, to)?;
        let lo = self.times.partition_point(|&s| s <= from);
        let hi = self.times.partition_point(|&s| s < to);
        let mut out = Vec::with_capacity(hi.saturating_sub(lo) + 2);
        out.push(from);
        out.extend_from_slice(&self.times[lo..hi.max(lo)]);
        if to > from {
            out.push(to);
        }
        Ok(out)
    }

    /// Reads a trajectory with a `t` column. State columns are `x0, x1, ...`
    /// when present, otherwise every other column in order.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, MonitorError> {
        let err = |e: csv::Error| MonitorError::Csv(e.to_string());
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(err)?.clone();
        let t_col = headers
            .iter()
            .position(|h| h.trim() == "t")
            .ok_or_else(|| MonitorError::Csv("no `t` column".into()))?;
        let mut x_cols: Vec<usize> = Vec::new();
        while let Some(c) = headers.iter().position(|h| h.trim() == format!("x{}", x_cols.len())) {
            x_cols.push(c);
        }
        if x_cols.is_empty() {
            x_cols = (0..headers.len()).filter(|&c| c != t_col).collect();
        }
        if x_cols.is_empty() {
            return Err(MonitorError::Csv("no state columns".into()));
        }
        let parse = |s: &str, row: usize| {
            s.trim().parse::<f64>().map_err(|_| MonitorError::Csv(format!("row {row}: cannot parse `{s}`")))
        };
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(err)?;
            let field = |c: usize| rec.get(c).ok_or_else(|| MonitorError::Csv(format!("row {row}: missing column {c}")));
            times.push(parse(field(t_col)?, row)?);
            states.push(x_cols.iter().map(|&c| parse(field(c)?, row)).collect::<Result<Vec<_>, _>>()?);
        }
        Self::new(times, states)
    }
}

/// Value domain of an evaluation: booleans or robustness margins.
trait Semantics: Copy {
    const TOP: Self;
    const BOTTOM: Self;
    fn pred(h: f64) -> Self;
    fn not_pred(h: f64) -> Self;
    fn meet(self, other: Self) -> Self;
    fn join(self, other: Self) -> Self;
}

impl Semantics for bool {
    const TOP: Self = true;
    const BOTTOM: Self = false;
    fn pred(h: f64) -> Self {
        h >= 0.0
    }
    fn not_pred(h: f64) -> Self {
        h.is_nan() || h < 0.0
    }
    fn meet(self, other: Self) -> Self {
        self && other
    }
    fn join(self, other: Self) -> Self {
        self || other
    }
}

impl Semantics for f64 {
    const TOP: Self = f64::INFINITY;
    const BOTTOM: Self = f64::NEG_INFINITY;
    fn pred(h: f64) -> Self {
        h
    }
    fn not_pred(h: f64) -> Self {
        -h
    }
    fn meet(self, other: Self) -> Self {
        self.min(other)
    }
    fn join(self, other: Self) -> Self {
        self.max(other)
    }
}

fn pred_value(p: &PredicateTable, name: &str, x: &[f64]) -> Result<f64, MonitorError> {
    let def = p.get(name)?;
    Ok(def.eval(def.project(x)?)?)
}

fn eval<S: Semantics>(f: &Formula, p: &PredicateTable, s: &SampledSignal, t: f64) -> Result<S, MonitorError> {
    match f {
        Formula::True => Ok(S::TOP),
        Formula::Pred(n) => Ok(S::pred(pred_value(p, n, &s.state_at(t))?)),
        Formula::NotPred(n) => Ok(S::not_pred(pred_value(p, n, &s.state_at(t))?)),
        Formula::And(parts) => parts.iter().try_fold(S::TOP, |acc, g| Ok(acc.meet(eval(g, p, s, t)?))),
        Formula::Always(i, body) => s
            .window(t + i.start(), t + i.end())?
            .into_iter()
            .try_fold(S::TOP, |acc, t1| Ok(acc.meet(eval(body, p, s, t1)?))),
        Formula::Eventually(i, body) => s
            .window(t + i.start(), t + i.end())?
            .into_iter()
            .try_fold(S::BOTTOM, |acc, t1| Ok(acc.join(eval(body, p, s, t1)?))),
        Formula::Until(i, lhs, rhs) => {
            let witnesses = s.window(t + i.start(), t + i.end())?;
            let (_, to) = s.check_window(t, t + i.end())?;
            let first = s.times.partition_point(|&x| x <= t);
            let last = s.times.partition_point(|&x| x < to);
            // Walk witnesses and interior samples together; `hold` covers
            // `{t}` and every sample strictly between `t` and the current witness.
            let mut hold: S = eval(lhs, p, s, t)?;
            let mut best = S::BOTTOM;
            let mut k = first;
            for &t1 in &witnesses {
                while k < last && s.times[k] < t1 {
                    hold = hold.meet(eval(lhs, p, s, s.times[k])?);
                    k += 1;
                }
                let clause = hold.meet(eval(lhs, p, s, t1)?).meet(eval(rhs, p, s, t1)?);
                best = best.join(clause);
            }
            Ok(best)
        }
    }
}

pub fn eval_boolean(f: &Formula, predicates: &PredicateTable, s: &SampledSignal, t: f64) -> Result<bool, MonitorError> {
    eval(f, predicates, s, t)
}

/// Min/max robustness; positive implies satisfaction, negative implies violation.
pub fn eval_robustness(f: &Formula, predicates: &PredicateTable, s: &SampledSignal, t: f64) -> Result<f64, MonitorError> {
    eval(f, predicates, s, t)
}

/// Verdict at the first sample time.
pub fn monitor(f: &Formula, predicates: &PredicateTable, s: &SampledSignal) -> Result<Verdict, MonitorError> {
    let t = s.start();
    Ok(Verdict { satisfied: eval_boolean(f, predicates, s, t)?, robustness: eval_robustness(f, predicates, s, t)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse_formula, Shape};

    fn table() -> PredicateTable {
        PredicateTable::new()
            .with("mu", Shape::Affine { a: vec![1.0, 0.0], b: 0.0 })
            .unwrap()
            .with("nu", Shape::Affine { a: vec![0.0, 1.0], b: 0.0 })
            .unwrap()
    }

    fn signal(f: impl Fn(f64) -> (f64, f64), n: usize, end: f64) -> SampledSignal {
        let times: Vec<f64> = (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect();
        let states = times.iter().map(|&t| { let (a, b) = f(t); vec![a, b] }).collect();
        SampledSignal::new(times, states).unwrap()
    }

    fn parse(text: &str) -> Formula {
        parse_formula(text, &table()).unwrap()
    }

    #[test]
    fn constant_signal() {
        let s = signal(|_| (1.0, 3.0), 11, 10.0);
        assert!(eval_boolean(&parse("G[0,5] mu"), &table(), &s, 0.0).unwrap());
        assert_eq!(eval_robustness(&parse("G[0,5] mu"), &table(), &s, 0.0).unwrap(), 1.0);
        assert_eq!(eval_robustness(&parse("mu & nu"), &table(), &s, 0.0).unwrap(), 1.0);
        assert_eq!(eval_robustness(&parse("!mu"), &table(), &s, 0.0).unwrap(), -1.0);
    }

    #[test]
    fn crossing_signal() {
        let s = signal(|t| (t / 5.0 - 1.0, 0.0), 21, 10.0);
        assert!(eval_boolean(&parse("F[0,10] mu"), &table(), &s, 0.0).unwrap());
        assert!(!eval_boolean(&parse("G[0,10] mu"), &table(), &s, 0.0).unwrap());
        assert_eq!(eval_robustness(&parse("F[0,10] mu"), &table(), &s, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn window_endpoints_are_interpolated() {
        let s = signal(|t| (t, 0.0), 3, 2.0);
        assert_eq!(s.window(0.5, 1.5).unwrap(), vec![0.5, 1.0, 1.5]);
        assert_eq!(s.window(1.0, 1.0).unwrap(), vec![1.0]);
        assert_eq!(s.state_at(0.25), vec![0.25, 0.0]);
        assert!(matches!(s.window(1.0, 3.0), Err(MonitorError::OutOfDomain { .. })));
    }

    #[test]
    fn three_phase_until() {
        // mu3 (here mu) holds on [0, 1.5]; mu1 (here nu) holds from 1.4 on.
        let s = signal(|t| (1.5 - t, t - 1.4), 301, 3.0);
        assert!(eval_boolean(&parse("mu U[1,2] nu"), &table(), &s, 0.0).unwrap());
        let rob = eval_robustness(&parse("mu U[1,2] nu"), &table(), &s, 0.0).unwrap();
        assert!(rob > 0.0 && rob <= 0.05 + 1e-12);
        let late = signal(|t| (1.5 - t, t - 1.6), 301, 3.0);
        assert!(!eval_boolean(&parse("mu U[1,2] nu"), &table(), &late, 0.0).unwrap());
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let s = signal(|_| (1.0, 1.0), 5, 4.0);
        assert!(matches!(
            eval_boolean(&parse("F[0,5] mu"), &table(), &s, 0.0),
            Err(MonitorError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let text = "t,x0,x1,u0\n0,1,2,9\n1,3,4,9\n";
        let s = SampledSignal::from_csv(text.as_bytes()).unwrap();
        assert_eq!(s.states()[1], vec![3.0, 4.0]);
        let plain = SampledSignal::from_csv("t,a\n0,1\n1,2\n".as_bytes()).unwrap();
        assert_eq!(plain.states()[0], vec![1.0]);
        assert!(SampledSignal::from_csv("t,x0\n".as_bytes()).is_err());
        assert!(SampledSignal::from_csv("t,x0\n0,abc\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn invalid_signals() {
        assert_eq!(SampledSignal::new(vec![0.0], vec![vec![1.0]]), Err(MonitorError::TooFewSamples(1)));
        assert_eq!(
            SampledSignal::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]),
            Err(MonitorError::NotIncreasing(1))
        );
    }
}
