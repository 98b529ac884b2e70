use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::smooth::smooth_min;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredicateError {
    #[error("predicate `{name}` expects a state of dimension {expected}, got {got}")]
    DimensionMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("predicate `{name}` is malformed: {reason}")]
    Invalid { name: String, reason: String },
    #[error("unknown predicate `{0}`")]
    Unknown(String),
}

/// Geometry of a predicate function `h(x)`; the predicate holds where `h(x) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `a . x + b`
    Affine { a: Vec<f64>, b: f64 },
    /// `radius^2 - |x - center|^2`
    Ball { center: Vec<f64>, radius: f64 },
    /// `-h_inner(x)`
    Negated { inner: Box<Shape> },
    /// Log-sum-exp under-approximation of `min_k h_k(x)`.
    SmoothAnd { parts: Vec<Shape>, kappa: f64 },
}

impl Shape {
    /// Axis-aligned box `lower <= x <= upper` as a smooth conjunction of half-planes.
    pub fn boxed(lower: &[f64], upper: &[f64], kappa: f64) -> Shape {
        let n = lower.len();
        let mut parts = Vec::with_capacity(2 * n);
        for k in 0..n {
            let mut a = vec![0.0; n];
            a[k] = 1.0;
            parts.push(Shape::Affine { a: a.clone(), b: -lower[k] });
            a[k] = -1.0;
            parts.push(Shape::Affine { a, b: upper[k] });
        }
        Shape::SmoothAnd { parts, kappa }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Affine { a, .. } => a.len(),
            Shape::Ball { center, .. } => center.len(),
            Shape::Negated { inner } => inner.dim(),
            Shape::SmoothAnd { parts, .. } => parts.first().map_or(0, Shape::dim),
        }
    }

    fn check(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        match self {
            Shape::Affine { a, b } => {
                if a.is_empty() || !finite(a) || !b.is_finite() {
                    return Err("affine coefficients must be finite and non-empty".into());
                }
            }
            Shape::Ball { center, radius } => {
                if center.is_empty() || !finite(center) {
                    return Err("ball center must be finite and non-empty".into());
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(format!("ball radius must be positive, got {radius}"));
                }
            }
            Shape::Negated { inner } => inner.check()?,
            Shape::SmoothAnd { parts, kappa } => {
                if parts.len() < 2 {
                    return Err("smooth conjunction needs at least two parts".into());
                }
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return Err(format!("kappa must be positive, got {kappa}"));
                }
                for p in parts {
                    p.check()?;
                }
                let d = parts[0].dim();
                if parts.iter().any(|p| p.dim() != d) {
                    return Err("smooth conjunction parts disagree on dimension".into());
                }
            }
        }
        Ok(())
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Affine { a, b } => a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b,
            Shape::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum();
                radius * radius - d2
            }
            Shape::Negated { inner } => -inner.value(x),
            Shape::SmoothAnd { parts, kappa } => {
                let vals: Vec<f64> = parts.iter().map(|p| p.value(x)).collect();
                smooth_min(&vals, *kappa).map(|s| s.value).unwrap_or(f64::INFINITY)
            }
        }
    }

    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self {
            Shape::Affine { a, .. } => (self.value(x), a.clone()),
            Shape::Ball { center, .. } => {
                let g = center.iter().zip(x).map(|(c, xi)| -2.0 * (xi - c)).collect();
                (self.value(x), g)
            }
            Shape::Negated { inner } => {
                let (v, g) = inner.value_and_grad(x);
                (-v, g.into_iter().map(|gi| -gi).collect())
            }
            Shape::SmoothAnd { parts, kappa } => {
                let evals: Vec<(f64, Vec<f64>)> = parts.iter().map(|p| p.value_and_grad(x)).collect();
                let vals: Vec<f64> = evals.iter().map(|(v, _)| *v).collect();
                let sm = smooth_min(&vals, *kappa).expect("validated non-empty parts");
                let mut g = vec![0.0; x.len()];
                for (w, (_, gk)) in sm.weights.iter().zip(&evals) {
                    for (gi, gki) in g.iter_mut().zip(gk) {
                        *gi += w * gki;
                    }
                }
                (sm.value, g)
            }
        }
    }
}

/// A named predicate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub name: String,
    pub shape: Shape,
}

impl PredicateDef {
    pub fn new(name: impl Into<String>, shape: Shape) -> Result<Self, PredicateError> {
        let def = Self { name: name.into(), shape };
        def.validate()?;
        Ok(def)
    }

    pub fn validate(&self) -> Result<(), PredicateError> {
        self.shape.check().map_err(|reason| PredicateError::Invalid {
            name: self.name.clone(),
            reason,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), PredicateError> {
        if x.len() != self.dim() {
            return Err(PredicateError::DimensionMismatch {
                name: self.name.clone(),
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PredicateError> {
        self.check_dim(x)?;
        Ok(self.shape.value(x))
    }

    /// Value and exact gradient.
    pub fn eval_with_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), PredicateError> {
        self.check_dim(x)?;
        Ok(self.shape.value_and_grad(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>, PredicateError> {
        self.eval_with_grad(x).map(|(_, g)| g)
    }

    /// Leading sub-state the predicate reads; a planar region evaluated on a
    /// `(px, py, heading)` state only looks at the position.
    pub fn project<'a>(&self, state: &'a [f64]) -> Result<&'a [f64], PredicateError> {
        state.get(..self.dim()).ok_or_else(|| PredicateError::DimensionMismatch {
            name: self.name.clone(),
            expected: self.dim(),
            got: state.len(),
        })
    }
}

/// `eval_predicate` in free-function form.
pub fn eval_predicate(p: &PredicateDef, x: &[f64]) -> Result<f64, PredicateError> {
    p.eval(x)
}

pub fn grad_predicate(p: &PredicateDef, x: &[f64]) -> Result<Vec<f64>, PredicateError> {
    p.grad(x)
}

/// Name-indexed predicate functions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Shape>", into = "BTreeMap<String, Shape>")]
pub struct PredicateTable {
    defs: BTreeMap<String, PredicateDef>,
}

impl PredicateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, def: PredicateDef) -> Result<(), PredicateError> {
        def.validate()?;
        self.defs.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn with(mut self, name: &str, shape: Shape) -> Result<Self, PredicateError> {
        self.insert(PredicateDef::new(name, shape)?)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Result<&PredicateDef, PredicateError> {
        self.defs.get(name).ok_or_else(|| PredicateError::Unknown(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.defs.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PredicateDef> {
        self.defs.values()
    }

    /// Largest dimension read by any predicate.
    pub fn max_dim(&self) -> usize {
        self.defs.values().map(PredicateDef::dim).max().unwrap_or(0)
    }
}

impl TryFrom<BTreeMap<String, Shape>> for PredicateTable {
    type Error = PredicateError;

    fn try_from(map: BTreeMap<String, Shape>) -> Result<Self, Self::Error> {
        let mut table = PredicateTable::new();
        for (name, shape) in map {
            table.insert(PredicateDef::new(name, shape)?)?;
        }
        Ok(table)
    }
}

impl From<PredicateTable> for BTreeMap<String, Shape> {
    fn from(table: PredicateTable) -> Self {
        table.defs.into_iter().map(|(k, v)| (k, v.shape)).collect()
    }
}
