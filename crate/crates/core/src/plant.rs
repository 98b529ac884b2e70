//! Control-affine plants and bounded disturbance signals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlantError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid plant: {0}")]
    Invalid(String),
}

/// `x' = f(x) + g(x) u + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Plant {
    /// State `(px, py, theta)`, input `(v, omega)`, offset point at distance `l`.
    /// The disturbance acts on the position channels only.
    Unicycle { l: f64 },
    /// `f(x) = A x + c`, `g(x) = B`, disturbance on every state channel.
    GenericAffine { a: Vec<Vec<f64>>, c: Vec<f64>, b: Vec<Vec<f64>> },
}

impl Plant {
    pub fn validate(&self) -> Result<(), PlantError> {
        match self {
            Plant::Unicycle { l } => {
                if !(l.is_finite() && *l > 0.0) {
                    return Err(PlantError::Invalid(format!("offset length must be positive, got {l}")));
                }
            }
            Plant::GenericAffine { a, c, b } => {
                let n = c.len();
                if n == 0 {
                    return Err(PlantError::Invalid("empty state".into()));
                }
                if a.len() != n || a.iter().any(|r| r.len() != n) {
                    return Err(PlantError::Invalid(format!("`a` must be {n}x{n}")));
                }
                let m = b.first().map_or(0, Vec::len);
                if m == 0 || b.len() != n || b.iter().any(|r| r.len() != m) {
                    return Err(PlantError::Invalid(format!("`b` must be {n}xm with m >= 1")));
                }
                if a.iter().chain(b.iter()).flatten().chain(c.iter()).any(|v| !v.is_finite()) {
                    return Err(PlantError::Invalid("non-finite coefficient".into()));
                }
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Plant::Unicycle { .. } => 3,
            Plant::GenericAffine { c, .. } => c.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Plant::Unicycle { .. } => 2,
            Plant::GenericAffine { b, .. } => b.first().map_or(0, Vec::len),
        }
    }

    /// Number of leading state channels the disturbance enters.
    pub fn disturbance_dim(&self) -> usize {
        match self {
            Plant::Unicycle { .. } => 2,
            Plant::GenericAffine { c, .. } => c.len(),
        }
    }

    fn check(&self, what: &'static str, v: &[f64], expected: usize) -> Result<(), PlantError> {
        if v.len() != expected {
            return Err(PlantError::Dimension { what, expected, got: v.len() });
        }
        Ok(())
    }

    pub fn drift(&self, x: &[f64]) -> Result<DVector<f64>, PlantError> {
        self.check("state", x, self.state_dim())?;
        Ok(match self {
            Plant::Unicycle { .. } => DVector::zeros(3),
            Plant::GenericAffine { a, c, .. } => {
                DVector::from_iterator(c.len(), a.iter().zip(c).map(|(row, ci)| ci + dot(row, x)))
            }
        })
    }

    pub fn input_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>, PlantError> {
        self.check("state", x, self.state_dim())?;
        Ok(match self {
            Plant::Unicycle { l } => {
                let (s, c) = x[2].sin_cos();
                DMatrix::from_row_slice(3, 2, &[c, -l * s, s, l * c, 0.0, 1.0])
            }
            Plant::GenericAffine { b, .. } => {
                let m = self.input_dim();
                DMatrix::from_row_iterator(b.len(), m, b.iter().flatten().copied())
            }
        })
    }

    /// `f(x) + g(x) u + d`, with `d` padded by zeros past the disturbed channels.
    pub fn deriv(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<DVector<f64>, PlantError> {
        self.check("input", u, self.input_dim())?;
        self.check("disturbance", d, self.disturbance_dim())?;
        let mut dx = self.drift(x)? + self.input_matrix(x)? * DVector::from_column_slice(u);
        for (k, dk) in d.iter().enumerate() {
            dx[k] += dk;
        }
        Ok(dx)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One disturbance channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Channel {
    Constant { value: f64 },
    /// `amplitude * cos(frequency * t + phase)`.
    Sinusoid { amplitude: f64, frequency: f64, #[serde(default)] phase: f64 },
    Sum { terms: Vec<Channel> },
}

impl Channel {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Channel::Constant { value } => *value,
            Channel::Sinusoid { amplitude, frequency, phase } => amplitude * (frequency * t + phase).cos(),
            Channel::Sum { terms } => terms.iter().map(|c| c.value(t)).sum(),
        }
    }

    /// Upper bound on `|value(t)|` over all `t`.
    pub fn bound(&self) -> f64 {
        match self {
            Channel::Constant { value } => value.abs(),
            Channel::Sinusoid { amplitude, .. } => amplitude.abs(),
            Channel::Sum { terms } => terms.iter().map(Channel::bound).sum(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub channels: Vec<Channel>,
}

impl Disturbance {
    pub fn zero(dim: usize) -> Self {
        Self { channels: vec![Channel::Constant { value: 0.0 }; dim] }
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        self.channels.iter().map(|c| c.value(t)).collect()
    }

    /// Euclidean bound `D` with `|d(t)| <= D` for all `t`.
    pub fn bound(&self) -> f64 {
        self.channels.iter().map(|c| c.bound().powi(2)).sum::<f64>().sqrt()
    }
}
