//! Reconstructed-barrier controller.
//!
//! The barrier is evaluated on an estimate `xhat` driven by a reference model,
//! shifted by an adaptive offset `eta`: `hhat = h(xhat, t) - eta`. The
//! reconstruction error `e = h(x, t) - hhat` is kept inside a shrinking funnel
//! `rho(t)` by the adaptive laws, and a one-constraint QP picks the
//! minimum-effort input keeping `hhat` non-negative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("invalid controller parameter: {0}")]
    Invalid(String),
    #[error("barrier constraint unenforceable at this state: input gradient vanishes with demand {demand}")]
    Unenforceable { demand: f64 },
    #[error("non-finite adaptive input")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_small")]
    pub c: f64,
    #[serde(default = "d_small")]
    pub gamma: f64,
    #[serde(default = "d_one")]
    pub varsigma: f64,
    #[serde(default = "d_one")]
    pub varrho: f64,
    /// Smoothing constant of the robust term in the `eta` law.
    #[serde(default = "d_eps_smooth")]
    pub eps_smooth: f64,
    #[serde(default = "d_one")]
    pub rho0: f64,
    #[serde(default = "d_rho_inf")]
    pub rho_inf: f64,
    /// Gain of the linear class-K function `alpha(y) = alpha_gain * y`.
    #[serde(default = "d_alpha")]
    pub alpha_gain: f64,
    /// Input weight; identity when absent.
    #[serde(default)]
    pub w: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub input_bounds: Option<Vec<f64>>,
    #[serde(default = "d_eta_reset")]
    pub eta_reset: f64,
    /// Clamp margin on `e` before the funnel terms; `1e-6 * rho_inf` when absent.
    #[serde(default)]
    pub e_guard: Option<f64>,
    /// Initial `eta`; falls back to the admissible construction when absent or inadmissible.
    #[serde(default = "d_eta0")]
    pub eta0: Option<f64>,
    #[serde(default)]
    pub r_hat0: f64,
}

fn d_lambda() -> f64 {
    10.0
}
fn d_small() -> f64 {
    0.01
}
fn d_one() -> f64 {
    1.0
}
fn d_eps_smooth() -> f64 {
    0.1
}
fn d_rho_inf() -> f64 {
    0.2
}
fn d_alpha() -> f64 {
    0.5
}
fn d_eta_reset() -> f64 {
    0.1
}
fn d_eta0() -> Option<f64> {
    Some(0.3)
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            lambda: d_lambda(),
            c: d_small(),
            gamma: d_small(),
            varsigma: d_one(),
            varrho: d_one(),
            eps_smooth: d_eps_smooth(),
            rho0: d_one(),
            rho_inf: d_rho_inf(),
            alpha_gain: d_alpha(),
            w: None,
            input_bounds: None,
            eta_reset: d_eta_reset(),
            e_guard: None,
            eta0: d_eta0(),
            r_hat0: 0.0,
        }
    }
}

impl ControllerParams {
    /// Checks every invariant for an `m`-input plant and returns the weight matrix.
    pub fn validate(&self, m: usize) -> Result<DMatrix<f64>, ControllerError> {
        let bad = |s: String| Err(ControllerError::Invalid(s));
        if !(self.lambda > 0.5 && self.lambda.is_finite()) {
            return bad(format!("lambda must exceed 1/2, got {}", self.lambda));
        }
        for (name, v) in [
            ("c", self.c),
            ("gamma", self.gamma),
            ("varsigma", self.varsigma),
            ("varrho", self.varrho),
            ("eps_smooth", self.eps_smooth),
            ("rho_inf", self.rho_inf),
            ("alpha_gain", self.alpha_gain),
            ("eta_reset", self.eta_reset),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.rho0 > self.rho_inf && self.rho0.is_finite()) {
            return bad(format!("rho0 = {} must exceed rho_inf = {}", self.rho0, self.rho_inf));
        }
        if let Some(g) = self.e_guard {
            if !(g > 0.0 && g < self.rho_inf / 2.0) {
                return bad(format!("e_guard must lie in (0, rho_inf/2), got {g}"));
            }
        }
        if !(self.r_hat0 >= 0.0 && self.r_hat0.is_finite()) {
            return bad(format!("r_hat0 must be non-negative, got {}", self.r_hat0));
        }
        if let Some(b) = &self.input_bounds {
            if b.len() != m || b.iter().any(|v| v.is_nan() || *v <= 0.0) {
                return bad(format!("input_bounds must hold {m} positive values"));
            }
        }
        let w = match &self.w {
            None => DMatrix::identity(m, m),
            Some(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return bad(format!("w must be {m}x{m}"));
                }
                DMatrix::from_row_iterator(m, m, rows.iter().flatten().copied())
            }
        };
        if (&w - w.transpose()).abs().max() > 1e-12 * w.abs().max().max(1.0) {
            return bad("w must be symmetric".into());
        }
        if w.clone().cholesky().is_none() {
            return bad("w must be positive definite".into());
        }
        Ok(w)
    }

    pub fn guard(&self) -> f64 {
        self.e_guard.unwrap_or(1e-6 * self.rho_inf)
    }

    pub fn alpha(&self, y: f64) -> f64 {
        self.alpha_gain * y
    }
}

/// `rho(t) = (rho0 - rho_inf) exp(-varrho (t - tau)) + rho_inf`.
pub fn funnel(t: f64, tau: f64, p: &ControllerParams) -> f64 {
    (p.rho0 - p.rho_inf) * (-p.varrho * (t - tau)).exp() + p.rho_inf
}

/// Reference model `f(x) + g(x) u + lambda (x - xhat)`.
pub fn reference_model_deriv(f: &DVector<f64>, gu: &DVector<f64>, x: &[f64], xhat: &[f64], lambda: f64) -> DVector<f64> {
    let tilde = DVector::from_column_slice(x) - DVector::from_column_slice(xhat);
    f + gu + tilde * lambda
}

/// Differentiator `f(x) + lambda (x - z)`.
pub fn differentiator_deriv(f: &DVector<f64>, x: &[f64], z: &[f64], lambda: f64) -> DVector<f64> {
    f + (DVector::from_column_slice(x) - DVector::from_column_slice(z)) * lambda
}

/// Funnel quantities and adaptive rates at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveRates {
    pub eta_dot: f64,
    pub r_hat_dot: f64,
    pub rho: f64,
    /// Transformed error `0.5 ln(e / (rho - e))`.
    pub eps_error: f64,
    pub chi: f64,
    /// The raw error was outside `[guard, rho - guard]` and got clamped.
    pub clamped: bool,
}

/// Adaptive laws for `eta` and `r_hat`.
///
/// `grad_norm` is the norm of the gradient of `hhat` in `(xhat, t)` and
/// `zbar_norm` the norm of `(z', 1)`.
pub fn adaptive_derivs(
    e: f64,
    t: f64,
    tau: f64,
    grad_norm: f64,
    zbar_norm: f64,
    r_hat: f64,
    p: &ControllerParams,
) -> Result<AdaptiveRates, ControllerError> {
    if ![e, t, tau, grad_norm, zbar_norm, r_hat].iter().all(|v| v.is_finite()) {
        return Err(ControllerError::NonFinite);
    }
    let rho = funnel(t, tau, p);
    let guard = p.guard();
    let ec = e.clamp(guard, rho - guard);
    let clamped = ec != e;
    let gap = ec * (rho - ec);
    let eps_error = 0.5 * (ec / (rho - ec)).ln();
    let norms = grad_norm + zbar_norm;
    let chi = eps_error * rho / (2.0 * gap) * norms;
    let decay = (-p.varrho * (t - tau)).exp();
    let robust = if r_hat == 0.0 {
        0.0
    } else {
        r_hat * r_hat * norms * chi / (chi * chi * r_hat * r_hat + p.eps_smooth * p.eps_smooth).sqrt()
    };
    let eta_dot = -p.c * gap / rho * eps_error - p.varrho * ec / rho * (p.rho0 - p.rho_inf) * decay
        - rho * eps_error / (4.0 * gap)
        - robust;
    let r_hat_dot = p.gamma * eps_error.abs() * rho / (2.0 * gap) * norms - p.varsigma * r_hat;
    Ok(AdaptiveRates { eta_dot, r_hat_dot, rho, eps_error, chi, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QpStatus {
    /// The unconstrained optimum `u = 0` already satisfies the constraint.
    Inactive,
    /// The constraint is active and the input bounds are respected.
    Active,
    /// The constraint cannot be met within the input bounds; `residual = b - c^T u > 0`.
    Saturated { residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub status: QpStatus,
}

/// Minimizes `0.5 u^T W u` subject to `c^T u >= b` and optional `|u_i| <= ubar_i`.
///
/// Without bounds the solution is closed-form. With bounds and diagonal `W`
/// the exact solution is found through the scalar multiplier; with bounds
/// and a general `W` the closed-form solution is clamped.
pub fn qp_solve(
    c: &DVector<f64>,
    b: f64,
    w: &DMatrix<f64>,
    bounds: Option<&[f64]>,
) -> Result<QpSolution, ControllerError> {
    let m = c.len();
    if b <= 0.0 {
        return Ok(QpSolution { u: DVector::zeros(m), status: QpStatus::Inactive });
    }
    if c.iter().all(|v| *v == 0.0) {
        return Err(ControllerError::Unenforceable { demand: b });
    }
    let winv_c = w.clone().cholesky().expect("validated weight").solve(c);
    let u = &winv_c * (b / c.dot(&winv_c));
    let Some(ubar) = bounds else {
        return Ok(QpSolution { u, status: QpStatus::Active });
    };
    if u.iter().zip(ubar).all(|(ui, bi)| ui.abs() <= *bi) {
        return Ok(QpSolution { u, status: QpStatus::Active });
    }
    let is_diagonal = (0..m).all(|i| (0..m).all(|j| i == j || w[(i, j)] == 0.0));
    let u = if is_diagonal {
        box_diagonal(c, b, &w.diagonal(), ubar)
    } else {
        DVector::from_iterator(m, u.iter().zip(ubar).map(|(ui, bi)| ui.clamp(-bi, *bi)))
    };
    let residual = b - c.dot(&u);
    let status = if residual > 1e-12 * b.max(1.0) { QpStatus::Saturated { residual } } else { QpStatus::Active };
    Ok(QpSolution { u, status })
}

/// `u_i(l) = clamp(l c_i / w_i, -ubar_i, ubar_i)` with the smallest `l >= 0` reaching `c^T u = b`.
fn box_diagonal(c: &DVector<f64>, b: f64, w: &DVector<f64>, ubar: &[f64]) -> DVector<f64> {
    let m = c.len();
    let at = |l: f64| DVector::from_iterator(m, (0..m).map(|i| (l * c[i] / w[i]).clamp(-ubar[i], ubar[i])));
    // Multipliers at which each channel saturates, ascending.
    let mut knees: Vec<(f64, usize)> =
        (0..m).filter(|&i| c[i] != 0.0).map(|i| (ubar[i] * w[i] / c[i].abs(), i)).collect();
    knees.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut slope: f64 = (0..m).filter(|&i| c[i] != 0.0).map(|i| c[i] * c[i] / w[i]).sum();
    let mut saturated = 0.0;
    for &(l, i) in &knees {
        let reach = l * slope + saturated;
        if reach >= b {
            return at((b - saturated) / slope);
        }
        slope -= c[i] * c[i] / w[i];
        saturated += c[i].abs() * ubar[i];
    }
    at(knees.last().map_or(0.0, |k| k.0))
}

/// How `eta` was chosen at an initialization or release instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EtaChoice {
    Configured,
    /// `e` placed at the middle of the admissible band.
    Centered,
    /// `eta = h(xhat) - h(x) / 2`, so `e = h(x) / 2`.
    HalfBarrier,
    /// No admissible value; the centred choice is used and the event flagged.
    Fault,
}

/// Picks `eta` so that `hhat = h_hat_raw - eta >= 0` and `e = h_true - h_hat_raw + eta`
/// lies in `(0, upper)`. `h_true = h(x, t)`, `h_hat_raw = h(xhat, t)`.
pub fn select_eta(h_true: f64, h_hat_raw: f64, upper: f64, preferred: Option<f64>) -> (f64, EtaChoice) {
    let admissible = |eta: f64| {
        let e = h_true - h_hat_raw + eta;
        e > 0.0 && e < upper && h_hat_raw - eta >= 0.0
    };
    let centered = upper / 2.0 - h_true + h_hat_raw;
    let half = h_hat_raw - h_true / 2.0;
    if let Some(p) = preferred.filter(|&p| admissible(p)) {
        (p, EtaChoice::Configured)
    } else if admissible(centered) {
        (centered, EtaChoice::Centered)
    } else if admissible(half) {
        (half, EtaChoice::HalfBarrier)
    } else {
        (centered, EtaChoice::Fault)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ControllerParams {
        ControllerParams::default()
    }

    #[test]
    fn defaults_validate() {
        let w = params().validate(2).unwrap();
        assert_eq!(w, DMatrix::identity(2, 2));
        let mut p = params();
        p.lambda = 0.5;
        assert!(p.validate(2).is_err());
        let mut p = params();
        p.rho0 = 0.1;
        assert!(p.validate(2).is_err());
        let mut p = params();
        p.w = Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(p.validate(2).is_err());
        p.w = Some(vec![vec![1.0, 0.0], vec![0.0, 0.036f64.powi(2)]]);
        assert!(p.validate(2).is_ok());
    }

    #[test]
    fn funnel_values() {
        let p = params();
        assert_eq!(funnel(3.0, 3.0, &p), 1.0);
        assert!((funnel(2f64.ln(), 0.0, &p) - 0.6).abs() < 1e-15);
        assert!((funnel(1e3, 0.0, &p) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn model_derivatives() {
        let zero = DVector::zeros(2);
        let d = reference_model_deriv(&zero, &zero, &[0.1, 0.0], &[0.0, 0.0], 10.0);
        assert!((d[0] - 1.0).abs() < 1e-15 && d[1] == 0.0);
        let d = differentiator_deriv(&zero, &[0.0, 0.2], &[0.0, 0.0], 10.0);
        assert!((d[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn centered_error_leaves_only_funnel_term() {
        let p = params();
        let r = adaptive_derivs(0.5, 0.0, 0.0, 3.0, 2.0, 0.7, &p).unwrap();
        assert_eq!(r.eps_error, 0.0);
        assert_eq!(r.eta_dot, -p.varrho * 0.5 / 1.0 * 0.8);
        assert!((r.r_hat_dot + 0.7).abs() < 1e-15);
        assert!(!r.clamped);
    }

    #[test]
    fn guard_clamps_and_reports() {
        let r = adaptive_derivs(-0.1, 0.0, 0.0, 1.0, 1.0, 0.0, &params()).unwrap();
        assert!(r.clamped && r.eta_dot > 0.0);
        assert!(adaptive_derivs(f64::NAN, 0.0, 0.0, 1.0, 1.0, 0.0, &params()).is_err());
    }

    #[test]
    fn qp_closed_form_cases() {
        let w = DMatrix::identity(2, 2);
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let s = qp_solve(&c, 2.0, &w, None).unwrap();
        assert_eq!(s.u.as_slice(), &[2.0, 0.0]);
        let s = qp_solve(&c, -1.0, &w, None).unwrap();
        assert_eq!(s.status, QpStatus::Inactive);
        assert_eq!(s.u.as_slice(), &[0.0, 0.0]);
        let zero = DVector::zeros(2);
        assert!(matches!(qp_solve(&zero, 1.0, &w, None), Err(ControllerError::Unenforceable { .. })));
    }

    #[test]
    fn qp_weights_angular_channel() {
        let l2 = 0.036f64.powi(2);
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, l2]);
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let s = qp_solve(&c, 1.0, &w, None).unwrap();
        assert!((s.u[1] / s.u[0] - 1.0 / l2).abs() < 1e-6);
    }

    #[test]
    fn qp_box_bounds_exact() {
        let w = DMatrix::identity(2, 2);
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let s = qp_solve(&c, 3.0, &w, Some(&[1.0, 5.0])).unwrap();
        assert_eq!(s.status, QpStatus::Active);
        assert!((s.u[0] - 1.0).abs() < 1e-15 && (s.u[1] - 2.0).abs() < 1e-15);
        let s = qp_solve(&c, 10.0, &w, Some(&[1.0, 5.0])).unwrap();
        assert_eq!(s.u.as_slice(), &[1.0, 5.0]);
        assert_eq!(s.status, QpStatus::Saturated { residual: 4.0 });
    }

    #[test]
    fn eta_selection() {
        assert_eq!(select_eta(1.0, 1.0, 0.2, Some(0.1)), (0.1, EtaChoice::Configured));
        let (eta, how) = select_eta(1.0, 0.8, 0.2, Some(0.1));
        assert_eq!(how, EtaChoice::Centered);
        assert!((eta + 0.1).abs() < 1e-15);
        assert_eq!(select_eta(-1.0, -1.0, 0.2, Some(0.1)).1, EtaChoice::Fault);
    }
}
