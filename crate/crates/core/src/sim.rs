//! Fixed-step closed-loop simulation.
//!
//! The stacked state `(x, xhat, z, eta, r_hat)` is integrated with classical
//! RK4. The input and the adaptive rates are computed at the start of each
//! step and held over it. Every switching time of the barrier is a grid
//! point, so no step straddles a discontinuity.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::cbf::{eval_cbf, CbfError, CbfSpec};
use crate::controller::{
    adaptive_derivs, funnel, qp_solve, select_eta, ControllerError, ControllerParams, EtaChoice, QpStatus,
};
use crate::plant::{Disturbance, Plant, PlantError};
use crate::scenario::{prepare, Pipeline, ScenarioConfig, ScenarioError};

/// Bits of [`LogRow::flags`].
pub mod flags {
    pub const GUARD_CLAMP: u32 = 1;
    pub const QP_SATURATED: u32 = 2;
    pub const RELEASE_RESET: u32 = 4;
    pub const EXPIRED: u32 = 8;
    pub const RESET_FAULT: u32 = 16;
    pub const FUNNEL_VIOLATION: u32 = 32;
    pub const UNENFORCEABLE: u32 = 64;
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Cbf(#[from] CbfError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("integration fault at t = {t}: non-finite state")]
    Fault { t: f64, partial: Box<TrajectoryLog> },
}

/// Classical fourth-order Runge-Kutta step for `y' = f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: &[f64], dt: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect() };
    let k1 = f(t, y);
    let k2 = f(t + dt / 2.0, &axpy(dt / 2.0, &k1));
    let k3 = f(t + dt / 2.0, &axpy(dt / 2.0, &k2));
    let k4 = f(t + dt, &axpy(dt, &k3));
    (0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// Time grid over `[0, end]` containing every breakpoint inside it exactly;
/// each gap is split into equal steps no longer than `dt`.
pub fn aligned_grid(breakpoints: &[f64], end: f64, dt: f64) -> Vec<f64> {
    let mut marks: Vec<f64> = breakpoints.iter().copied().filter(|&s| s > 0.0 && s < end).collect();
    marks.push(end);
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    let mut grid = vec![0.0];
    let mut start = 0.0;
    for mark in marks {
        let n = ((mark - start) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (mark - start) / n as f64;
        grid.extend((1..n).map(|k| start + k as f64 * h));
        grid.push(mark);
        start = mark;
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub h: f64,
    pub hhat: f64,
    pub e: f64,
    pub rho: f64,
    pub eta: f64,
    pub rhat: f64,
    pub flags: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub state_dim: usize,
    pub input_dim: usize,
    pub rows: Vec<LogRow>,
    /// How `eta` was chosen at `t = 0` and at each release, in order.
    pub eta_choices: Vec<(f64, EtaChoice)>,
}

impl TrajectoryLog {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["x", "xhat", "z"] {
            h.extend((0..self.state_dim).map(|i| format!("{prefix}{i}")));
        }
        h.extend((0..self.input_dim).map(|i| format!("u{i}")));
        h.extend(["h", "hhat", "e", "rho", "eta", "rhat", "flags"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let num = |v: f64| format!("{v:.16e}");
        for r in &self.rows {
            let mut rec: Vec<String> = vec![num(r.t)];
            rec.extend(r.x.iter().chain(&r.xhat).chain(&r.z).chain(&r.u).map(|v| num(*v)));
            rec.extend([r.h, r.hhat, r.e, r.rho, r.eta, r.rhat].map(num));
            rec.push(r.flags.to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a log written by [`TrajectoryLog::write_csv`]. Reset choices are
    /// not stored in the CSV and come back empty.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
        let count = |prefix: &str| (0..).take_while(|i| headers.contains(&format!("{prefix}{i}"))).count();
        let (n, m) = (count("x"), count("u"));
        let log = TrajectoryLog { state_dim: n, input_dim: m, rows: Vec::new(), eta_choices: Vec::new() };
        if log.header() != headers {
            return Err("not a trajectory log: unexpected header".into());
        }
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let bad = |s: &str| format!("row {k}: cannot parse `{s}`");
            let v: Vec<f64> = rec
                .iter()
                .take(rec.len() - 1)
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad(s)))
                .collect::<Result<_, _>>()?;
            let flags_field = rec.get(rec.len() - 1).unwrap_or("");
            let flags = flags_field.trim().parse::<u32>().map_err(|_| bad(flags_field))?;
            let tail = &v[1 + 3 * n + m..];
            rows.push(LogRow {
                t: v[0],
                x: v[1..1 + n].to_vec(),
                xhat: v[1 + n..1 + 2 * n].to_vec(),
                z: v[1 + 2 * n..1 + 3 * n].to_vec(),
                u: v[1 + 3 * n..1 + 3 * n + m].to_vec(),
                h: tail[0],
                hhat: tail[1],
                e: tail[2],
                rho: tail[3],
                eta: tail[4],
                rhat: tail[5],
                flags,
            });
        }
        Ok(TrajectoryLog { rows, ..log })
    }

    pub fn count(&self, flag: u32) -> usize {
        self.rows.iter().filter(|r| r.flags & flag != 0).count()
    }

    /// Rows where the barrier is still defined.
    pub fn live_rows(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.flags & flags::EXPIRED == 0)
    }

    pub fn min_hhat(&self) -> f64 {
        self.live_rows().map(|r| r.hhat).fold(f64::INFINITY, f64::min)
    }

    pub fn max_error_ratio(&self) -> f64 {
        self.live_rows().map(|r| r.e / r.rho).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_error_ratio(&self) -> f64 {
        self.live_rows().map(|r| r.e / r.rho).fold(f64::INFINITY, f64::min)
    }
}

/// Everything needed to advance one run.
pub struct ClosedLoop<'a> {
    pub spec: &'a CbfSpec,
    pub plant: &'a Plant,
    pub params: &'a ControllerParams,
    pub disturbance: &'a Disturbance,
    w: nalgebra::DMatrix<f64>,
}

struct Joint {
    x: Vec<f64>,
    xhat: Vec<f64>,
    z: Vec<f64>,
    eta: f64,
    rhat: f64,
    tau: f64,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        spec: &'a CbfSpec,
        plant: &'a Plant,
        params: &'a ControllerParams,
        disturbance: &'a Disturbance,
    ) -> Result<Self, SimError> {
        let w = params.validate(plant.input_dim())?;
        Ok(Self { spec, plant, params, disturbance, w })
    }

    /// Input, adaptive rates and the log row at the start of a step.
    fn control(&self, t: f64, s: &Joint) -> Result<(Vec<f64>, f64, f64, LogRow), SimError> {
        let p = self.params;
        let n = s.x.len();
        let m = self.plant.input_dim();
        let true_h = eval_cbf(self.spec, &s.x, t)?;
        let est = eval_cbf(self.spec, &s.xhat, t)?;
        let rho = funnel(t, s.tau, p);
        let mut row = LogRow {
            t,
            x: s.x.clone(),
            xhat: s.xhat.clone(),
            z: s.z.clone(),
            u: vec![0.0; m],
            h: true_h.value,
            hhat: f64::INFINITY,
            e: f64::NAN,
            rho,
            eta: s.eta,
            rhat: s.rhat,
            flags: 0,
        };
        if est.expired || true_h.expired {
            row.flags |= flags::EXPIRED;
            return Ok((vec![0.0; m], 0.0, 0.0, row));
        }
        let hhat = est.value - s.eta;
        let e = true_h.value - hhat;
        row.hhat = hhat;
        row.e = e;
        if !(e > 0.0 && e < rho) {
            row.flags |= flags::FUNNEL_VIOLATION;
        }
        let f = self.plant.drift(&s.x)?;
        let g = self.plant.input_matrix(&s.x)?;
        let zdot = crate::controller::differentiator_deriv(&f, &s.x, &s.z, p.lambda);
        let zbar_norm = (zdot.norm_squared() + 1.0).sqrt();
        let grad = DVector::from_column_slice(&est.grad_x);
        let grad_norm = (grad.norm_squared() + est.grad_t * est.grad_t).sqrt();
        let rates = adaptive_derivs(e, t, s.tau, grad_norm, zbar_norm, s.rhat, p)?;
        if rates.clamped {
            row.flags |= flags::GUARD_CLAMP;
        }
        let tilde = DVector::from_column_slice(&s.x) - DVector::from_column_slice(&s.xhat);
        let c = g.transpose() * &grad;
        let b = -p.alpha(hhat) - grad.dot(&(f + tilde * p.lambda)) + rates.eta_dot - est.grad_t;
        let u = match qp_solve(&c, b, &self.w, p.input_bounds.as_deref()) {
            Ok(sol) => {
                if matches!(sol.status, QpStatus::Saturated { .. }) {
                    row.flags |= flags::QP_SATURATED;
                }
                sol.u.as_slice().to_vec()
            }
            Err(ControllerError::Unenforceable { .. }) => {
                row.flags |= flags::UNENFORCEABLE;
                vec![0.0; m]
            }
            Err(other) => return Err(other.into()),
        };
        debug_assert_eq!(u.len(), m);
        debug_assert_eq!(row.x.len(), n);
        row.u = u.clone();
        Ok((u, rates.eta_dot, rates.r_hat_dot, row))
    }

    fn advance(&self, s: &Joint, u: &[f64], eta_dot: f64, rhat_dot: f64, t: f64, dt: f64) -> Result<Joint, SimError> {
        let n = s.x.len();
        let lambda = self.params.lambda;
        let mut y: Vec<f64> = Vec::with_capacity(3 * n + 2);
        y.extend(&s.x);
        y.extend(&s.xhat);
        y.extend(&s.z);
        y.push(s.eta);
        y.push(s.rhat);
        let plant = self.plant;
        let dist = self.disturbance;
        let rhs = |tt: f64, y: &[f64]| -> Vec<f64> {
            let (x, rest) = y.split_at(n);
            let (xhat, rest) = rest.split_at(n);
            let z = &rest[..n];
            let f = plant.drift(x).expect("checked dimensions");
            let gu = plant.input_matrix(x).expect("checked dimensions") * DVector::from_column_slice(u);
            let xdot = plant.deriv(x, u, &dist.value(tt)).expect("checked dimensions");
            let xhat_dot = crate::controller::reference_model_deriv(&f, &gu, x, xhat, lambda);
            let zdot = crate::controller::differentiator_deriv(&f, x, z, lambda);
            let mut out = Vec::with_capacity(y.len());
            out.extend(xdot.iter());
            out.extend(xhat_dot.iter());
            out.extend(zdot.iter());
            out.push(eta_dot);
            out.push(rhat_dot);
            out
        };
        let y = rk4_step(rhs, t, &y, dt);
        Ok(Joint {
            x: y[..n].to_vec(),
            xhat: y[n..2 * n].to_vec(),
            z: y[2 * n..3 * n].to_vec(),
            eta: y[3 * n],
            rhat: y[3 * n + 1],
            tau: s.tau,
        })
    }

    /// Re-selects `eta` at `t`; returns the flags to record.
    fn reset(&self, s: &mut Joint, t: f64, initial: bool, choices: &mut Vec<(f64, EtaChoice)>) -> Result<u32, SimError> {
        let p = self.params;
        let h = eval_cbf(self.spec, &s.x, t)?;
        let hh = eval_cbf(self.spec, &s.xhat, t)?;
        s.tau = t;
        if h.expired || hh.expired {
            return Ok(0);
        }
        let (upper, preferred) = if initial { (p.rho0, p.eta0) } else { (p.rho_inf, Some(p.eta_reset)) };
        let (eta, how) = select_eta(h.value, hh.value, upper, preferred);
        s.eta = eta;
        choices.push((t, how));
        let mut f = if initial { 0 } else { flags::RELEASE_RESET };
        if how == EtaChoice::Fault {
            f |= flags::RESET_FAULT;
        }
        Ok(f)
    }

    /// Integrates over `grid`, resetting `eta` at the given release instants.
    pub fn run(&self, x0: &[f64], xhat0: &[f64], grid: &[f64], releases: &[f64]) -> Result<TrajectoryLog, SimError> {
        let n = self.plant.state_dim();
        let mut log = TrajectoryLog { state_dim: n, input_dim: self.plant.input_dim(), rows: Vec::new(), eta_choices: Vec::new() };
        let mut s = Joint {
            x: x0.to_vec(),
            xhat: xhat0.to_vec(),
            z: xhat0.to_vec(),
            eta: 0.0,
            rhat: self.params.r_hat0,
            tau: 0.0,
        };
        let mut pending = self.reset(&mut s, grid[0], true, &mut log.eta_choices)?;
        for (k, &t) in grid.iter().enumerate() {
            let (u, eta_dot, rhat_dot, mut row) = self.control(t, &s)?;
            row.flags |= pending;
            let expired = row.flags & flags::EXPIRED != 0;
            log.rows.push(row);
            if expired || k + 1 == grid.len() {
                break;
            }
            let t_next = grid[k + 1];
            s = self.advance(&s, &u, eta_dot, rhat_dot, t, t_next - t)?;
            let finite = s.x.iter().chain(&s.xhat).chain(&s.z).all(|v| v.is_finite()) && s.eta.is_finite() && s.rhat.is_finite();
            if !finite {
                return Err(SimError::Fault { t: t_next, partial: Box::new(log) });
            }
            pending = if releases.contains(&t_next) { self.reset(&mut s, t_next, false, &mut log.eta_choices)? } else { 0 };
        }
        Ok(log)
    }
}

/// Runs a prepared pipeline under a scenario's plant, controller and disturbance.
pub fn run_pipeline(cfg: &ScenarioConfig, pipeline: &Pipeline) -> Result<TrajectoryLog, SimError> {
    let disturbance = cfg.disturbance();
    let cl = ClosedLoop::new(&pipeline.spec, &cfg.plant, &cfg.controller, &disturbance)?;
    let end = cfg.sim.horizon.unwrap_or(pipeline.timed.horizon);
    let breakpoints: Vec<f64> = pipeline.timed.switching.iter().map(|s| s.time).collect();
    let grid = aligned_grid(&breakpoints, end, cfg.sim.dt);
    let releases = pipeline.timed.release_instants();
    let x0 = &cfg.sim.initial_state;
    let xhat0 = cfg.sim.initial_estimate.as_ref().unwrap_or(x0);
    cl.run(x0, xhat0, &grid, &releases)
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog, SimError> {
    let pipeline = prepare(cfg)?;
    run_pipeline(cfg, &pipeline)
}
