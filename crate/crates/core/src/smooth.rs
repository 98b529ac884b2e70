//! Log-sum-exp smooth minimum.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmoothMinError {
    #[error("smooth minimum of an empty list")]
    Empty,
    #[error("smooth minimum sharpness must be positive and finite, got {0}")]
    BadKappa(f64),
}

/// Result of [`smooth_min`]: the value and its partial derivatives with
/// respect to every input (softmax weights of `-kappa * h`, summing to one).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMin {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// `-(1/kappa) ln sum_k exp(-kappa h_k)`, shifted by the true minimum so large
/// `kappa * h` products cannot overflow.
///
/// The result never exceeds `min(values)` and is at most `ln(p) / kappa` below it.
pub fn smooth_min(values: &[f64], kappa: f64) -> Result<SmoothMin, SmoothMinError> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(SmoothMinError::BadKappa(kappa));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        return Err(SmoothMinError::Empty);
    }
    if values.len() == 1 {
        return Ok(SmoothMin { value: values[0], weights: vec![1.0] });
    }
    let exps: Vec<f64> = values.iter().map(|h| (-kappa * (h - min)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(SmoothMin {
        value: min - sum.ln() / kappa,
        weights: exps.into_iter().map(|e| e / sum).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_zeros() {
        let s = smooth_min(&[0.0, 0.0], 10.0).unwrap();
        assert!((s.value + 2f64.ln() / 10.0).abs() < 1e-15);
        assert_eq!(s.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn singleton_is_exact() {
        let s = smooth_min(&[3.25], 7.0).unwrap();
        assert_eq!(s.value, 3.25);
        assert_eq!(s.weights, vec![1.0]);
    }

    #[test]
    fn spread_values_respect_bounds() {
        let s = smooth_min(&[1.0, 5.0, 9.0], 10.0).unwrap();
        assert!(s.value <= 1.0 && s.value >= 1.0 - 3f64.ln() / 10.0);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn huge_products_do_not_overflow() {
        let s = smooth_min(&[1.0e4, 1.0e4 + 1.0], 1.0e3).unwrap();
        assert!(s.value.is_finite());
        assert!((s.value - 1.0e4).abs() < 1e-9);
        let s = smooth_min(&[-1.0e4, 3.0], 1.0e3).unwrap();
        assert_eq!(s.value, -1.0e4);
    }

    #[test]
    fn errors() {
        assert_eq!(smooth_min(&[], 1.0), Err(SmoothMinError::Empty));
        assert_eq!(smooth_min(&[1.0], 0.0), Err(SmoothMinError::BadKappa(0.0)));
    }
}
