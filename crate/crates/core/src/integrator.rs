//! Integration of the flow ODEs up to the terminal clearance before `t0 + Tp`.
//!
//! Two paths are available for the time-scaled flows. Raw time steps the ODE
//! as written, capping every step at half the remaining distance to the
//! singularity. Stretched time integrates in `s = int T dt`, where the
//! prescribed-time flow with constant gain becomes an ordinary gradient flow,
//! and maps samples back through the exact inverse clock.

use crate::error::{Error, Result};
use crate::flows::FlowSpec;
use crate::objectives::{distance, norm, Objective};

/// Gradient norm treated as "at equilibrium" by the stop rule.
pub const EQUILIBRIUM_GRAD_NORM: f64 = 1e-12;
/// Consecutive accepted steps below [`EQUILIBRIUM_GRAD_NORM`] before stopping.
pub const EQUILIBRIUM_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical fixed-step Runge-Kutta 4.
    Rk4,
    /// Dormand-Prince embedded 4(5) pair with PI step control.
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stretched time for the prescribed-time flow with constant gain, raw
    /// time otherwise.
    Auto,
    RawTime,
    StretchedTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// First step for RK45, constant step for RK4. `None` picks one.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    /// Stop at `t0 + Tp (1 - delta_rel)` for time-scaled flows.
    pub delta_rel: f64,
    pub mode: Mode,
    pub sample_count: usize,
    /// End time for flows without a time scale (they start at 0).
    pub horizon: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: None,
            max_steps: 10_000_000,
            delta_rel: 1e-6,
            mode: Mode::Auto,
            sample_count: 1000,
            horizon: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol", "must be > 0"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::invalid("abs_tol", "must be > 0"));
        }
        if !(self.delta_rel > 0.0 && self.delta_rel < 1.0) {
            return Err(Error::invalid("delta_rel", "must lie in (0, 1)"));
        }
        if self.max_steps < 1 {
            return Err(Error::invalid("max_steps", "must be >= 1"));
        }
        if self.sample_count < 2 {
            return Err(Error::invalid("sample_count", "must be >= 2"));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("initial_step", "must be > 0"));
            }
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("horizon", "must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReachedTStop,
    Equilibrium,
    StepFloor,
    MaxSteps,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::ReachedTStop => "reached_t_stop",
            StopReason::Equilibrium => "equilibrium",
            StopReason::StepFloor => "step_floor",
            StopReason::MaxSteps => "max_steps",
        }
    }

    /// Whether the trajectory covers the full requested interval.
    pub fn is_complete(&self) -> bool {
        matches!(self, StopReason::ReachedTStop | StopReason::Equilibrium)
    }
}

/// Uniformly sampled solution.
///
/// For the regulator, `f` is `x^2 / 2` and the gradient norm is `|x|`.
/// `lyap_vals` defaults to `f - f*` (or `f` when `f*` is unknown);
/// `envelope_vals` stays empty until an envelope is attached with
/// [`crate::diagnostics::annotate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub f_vals: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub lyap_vals: Vec<f64>,
    pub envelope_vals: Vec<f64>,
    pub stop_reason: StopReason,
    /// Path actually used.
    pub mode: Mode,
    /// Requested end of the interval.
    pub t_stop: f64,
    /// Accepted internal steps.
    pub steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }
}

/// Integrates `spec` from `x0` and returns `cfg.sample_count` samples
/// uniform in physical time.
pub fn integrate(
    spec: &FlowSpec,
    obj: Option<&Objective>,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    spec.check_inputs(obj, x0.len())?;
    cfg.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0", "must be finite"));
    }

    let mode = resolve_mode(spec, cfg.mode)?;
    let (t_start, t_stop) = match spec.time_scale() {
        Some(ts) => (ts.t0(), ts.stop_time(cfg.delta_rel)),
        None => (
            0.0,
            cfg.horizon.ok_or_else(|| {
                Error::invalid("horizon", "required for flows without a time scale")
            })?,
        ),
    };
    let n_samples = cfg.sample_count;
    let span = t_stop - t_start;
    let mut times: Vec<f64> = (0..n_samples)
        .map(|i| t_start + span * i as f64 / (n_samples - 1) as f64)
        .collect();
    times[n_samples - 1] = t_stop;

    let grad_probe = |y: &[f64]| -> f64 {
        match obj {
            Some(o) => norm(&o.gradient(y)),
            None => f64::INFINITY,
        }
    };
    let watch_equilibrium = spec.is_gradient_flow();

    let outcome = match mode {
        Mode::StretchedTime => {
            let ts = spec
                .time_scale()
                .expect("resolved mode implies a time scale");
            let grid = times
                .iter()
                .map(|&t| ts.stretched_time(t))
                .collect::<Result<Vec<f64>>>()?;
            let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
                spec.stretched_field_into(obj, y, dy);
                Ok(())
            };
            solve(
                &rhs,
                x0,
                &grid,
                cfg,
                &|_| f64::INFINITY,
                watch_equilibrium,
                &grad_probe,
            )?
        }
        _ => {
            let terminal = spec.time_scale().map(|ts| ts.terminal_time());
            let cap = move |t: f64| match terminal {
                Some(end) => (end - t) / 2.0,
                None => f64::INFINITY,
            };
            let rhs = |t: f64, y: &[f64], dy: &mut [f64]| spec.field_into(obj, t, y, dy);
            solve(&rhs, x0, &times, cfg, &cap, watch_equilibrium, &grad_probe)?
        }
    };

    times.truncate(outcome.samples.len());
    let states = outcome.samples;
    let (f_vals, grad_norms): (Vec<f64>, Vec<f64>) = states
        .iter()
        .map(|x| match obj {
            Some(o) => (o.value(x), norm(&o.gradient(x))),
            None => (0.5 * x[0] * x[0], x[0].abs()),
        })
        .unzip();
    let f_star = obj.and_then(Objective::min_value).unwrap_or(0.0);
    let lyap_vals = f_vals.iter().map(|f| f - f_star).collect();

    Ok(Trajectory {
        times,
        states,
        f_vals,
        grad_norms,
        lyap_vals,
        envelope_vals: Vec::new(),
        stop_reason: outcome.stop,
        mode,
        t_stop,
        steps: outcome.steps,
    })
}

fn resolve_mode(spec: &FlowSpec, requested: Mode) -> Result<Mode> {
    let constant_gain = match spec {
        FlowSpec::PrescribedTime { gain, .. } => gain.constant().is_some(),
        FlowSpec::Regulator { .. } => true,
        _ => false,
    };
    match requested {
        Mode::Auto => Ok(
            if matches!(spec, FlowSpec::PrescribedTime { .. }) && constant_gain {
                Mode::StretchedTime
            } else {
                Mode::RawTime
            },
        ),
        Mode::RawTime => Ok(Mode::RawTime),
        Mode::StretchedTime if spec.time_scale().is_none() => Err(Error::UnsupportedMode(format!(
            "stretched time needs a time-scaled flow, got `{}`",
            spec.name()
        ))),
        Mode::StretchedTime if !constant_gain => Err(Error::UnsupportedMode(
            "stretched time requires a constant gain k".into(),
        )),
        Mode::StretchedTime => Ok(Mode::StretchedTime),
    }
}

/// First sample time after which `|x - x*| <= eps` holds for every later
/// sample.
pub fn settling_time(traj: &Trajectory, x_star: &[f64], eps: f64) -> Option<f64> {
    let last_out = traj.states.iter().rposition(|x| distance(x, x_star) > eps);
    match last_out {
        None => traj.times.first().copied(),
        Some(i) if i + 1 < traj.len() => Some(traj.times[i + 1]),
        Some(_) => None,
    }
}

/// Integrates an arbitrary ODE `y' = rhs(tau, y)` over `grid` with the same
/// stepping machinery as [`integrate`], returning dense samples at the grid.
pub(crate) fn solve_on_grid(
    rhs: &Rhs<'_>,
    y0: &[f64],
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<Vec<f64>>, StopReason)> {
    let out = solve(rhs, y0, grid, cfg, &|_| f64::INFINITY, false, &|_| {
        f64::INFINITY
    })?;
    Ok((out.samples, out.stop))
}

struct Outcome {
    samples: Vec<Vec<f64>>,
    stop: StopReason,
    steps: usize,
}

type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + 'a;

/// Integrates over `[grid[0], grid.last()]`, writing the dense solution at
/// every grid point.
fn solve(
    rhs: &Rhs<'_>,
    y0: &[f64],
    grid: &[f64],
    cfg: &IntegratorConfig,
    step_cap: &dyn Fn(f64) -> f64,
    watch_equilibrium: bool,
    grad_probe: &dyn Fn(&[f64]) -> f64,
) -> Result<Outcome> {
    let n = y0.len();
    let t_start = grid[0];
    let t_end = *grid.last().unwrap();
    let mut samples = Vec::with_capacity(grid.len());
    samples.push(y0.to_vec());
    let mut next = 1;

    let mut t = t_start;
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    rhs(t, &y, &mut f)?;

    let mut stepper = match cfg.method {
        Method::Rk45 => Stepper::dopri(n),
        Method::Rk4 => Stepper::rk4(n),
    };
    let mut h = match (cfg.method, cfg.initial_step) {
        (_, Some(h)) => h,
        (Method::Rk4, None) => (t_end - t_start) / (10 * (grid.len() - 1)) as f64,
        (Method::Rk45, None) => initial_step(rhs, t, &y, &f, cfg)?,
    };
    let fixed_h = h;
    let mut err_old: f64 = 1e-4;
    let mut calm_steps = 0usize;
    let mut steps = 0usize;
    let mut stop = StopReason::ReachedTStop;
    let mut y_new = vec![0.0; n];
    let mut f_new = vec![0.0; n];

    while next < grid.len() {
        if steps >= cfg.max_steps {
            stop = StopReason::MaxSteps;
            break;
        }
        let remaining = t_end - t;
        let floor = 16.0 * f64::EPSILON * t.abs().max(1.0);
        let cap = step_cap(t);
        h = h.min(cap);
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < floor && !last {
            stop = StopReason::StepFloor;
            break;
        }
        let t_new = if last { t_end } else { t + h };
        let h_eff = t_new - t;

        let err = stepper.step(rhs, t, &y, &f, h_eff, &mut y_new, &mut f_new, cfg)?;
        if let Some(err) = err {
            if !(err <= 1.0) {
                // rejected
                let fac11 = if err.is_finite() {
                    err.powf(0.17)
                } else {
                    10.0
                };
                h = h_eff / (fac11 / 0.9).clamp(1.0, 10.0);
                if h < floor {
                    stop = StopReason::StepFloor;
                    break;
                }
                continue;
            }
            let fac = (err.max(1e-10).powf(0.17) / err_old.powf(0.04) / 0.9).clamp(0.2, 10.0);
            err_old = err.max(1e-4);
            h = h_eff / fac;
        } else {
            h = fixed_h;
        }
        if y_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t_new });
        }
        steps += 1;

        while next < grid.len() && grid[next] <= t_new {
            samples.push(hermite(t, &y, &f, t_new, &y_new, &f_new, grid[next]));
            next += 1;
        }
        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        std::mem::swap(&mut f, &mut f_new);

        if watch_equilibrium {
            if grad_probe(&y) <= EQUILIBRIUM_GRAD_NORM {
                calm_steps += 1;
            } else {
                calm_steps = 0;
            }
            if calm_steps >= EQUILIBRIUM_STEPS && next < grid.len() {
                stop = StopReason::Equilibrium;
                while samples.len() < grid.len() {
                    samples.push(y.clone());
                }
                next = grid.len();
            }
        }
    }

    Ok(Outcome {
        samples,
        stop,
        steps,
    })
}

fn hermite(t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    if t == t1 {
        return y1.to_vec();
    }
    let h = t1 - t0;
    let th = (t - t0) / h;
    let th2 = th * th;
    let th3 = th2 * th;
    let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
    let h10 = th3 - 2.0 * th2 + th;
    let h01 = -2.0 * th3 + 3.0 * th2;
    let h11 = th3 - th2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], cfg: &IntegratorConfig) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step(
    rhs: &Rhs<'_>,
    t: f64,
    y: &[f64],
    f: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let scaled = |v: &[f64]| {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(a, yi)| (a / (cfg.abs_tol + cfg.rel_tol * yi.abs())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let d0 = scaled(y);
    let d1 = scaled(f);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y.iter().zip(f).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let big = d1.max(d2);
    let h1 = if big <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / big).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

struct Stepper {
    kind: Method,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    err: Vec<f64>,
}

// Dormand-Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Stepper {
    fn dopri(n: usize) -> Self {
        Self {
            kind: Method::Rk45,
            k: vec![vec![0.0; n]; 6],
            tmp: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    fn rk4(n: usize) -> Self {
        Self {
            kind: Method::Rk4,
            k: vec![vec![0.0; n]; 3],
            tmp: vec![0.0; n],
            err: Vec::new(),
        }
    }

    /// Advances one step; writes `y(t + h)` and `f(t + h, y(t + h))`.
    /// Returns the scaled error estimate for embedded methods.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        rhs: &Rhs<'_>,
        t: f64,
        y: &[f64],
        f: &[f64],
        h: f64,
        y_new: &mut [f64],
        f_new: &mut [f64],
        cfg: &IntegratorConfig,
    ) -> Result<Option<f64>> {
        let n = y.len();
        match self.kind {
            Method::Rk4 => {
                let [k2, k3, k4] = &mut self.k[..] else {
                    unreachable!()
                };
                for i in 0..n {
                    self.tmp[i] = y[i] + 0.5 * h * f[i];
                }
                rhs(t + 0.5 * h, &self.tmp, k2)?;
                for i in 0..n {
                    self.tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                rhs(t + 0.5 * h, &self.tmp, k3)?;
                for i in 0..n {
                    self.tmp[i] = y[i] + h * k3[i];
                }
                rhs(t + h, &self.tmp, k4)?;
                for i in 0..n {
                    y_new[i] = y[i] + h / 6.0 * (f[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                rhs(t + h, y_new, f_new)?;
                Ok(None)
            }
            Method::Rk45 => {
                let [k2, k3, k4, k5, k6, _] = &mut self.k[..] else {
                    unreachable!()
                };
                let tmp = &mut self.tmp;
                for i in 0..n {
                    tmp[i] = y[i] + h * A21 * f[i];
                }
                rhs(t + C2 * h, tmp, k2)?;
                for i in 0..n {
                    tmp[i] = y[i] + h * (A31 * f[i] + A32 * k2[i]);
                }
                rhs(t + C3 * h, tmp, k3)?;
                for i in 0..n {
                    tmp[i] = y[i] + h * (A41 * f[i] + A42 * k2[i] + A43 * k3[i]);
                }
                rhs(t + C4 * h, tmp, k4)?;
                for i in 0..n {
                    tmp[i] = y[i] + h * (A51 * f[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
                }
                rhs(t + C5 * h, tmp, k5)?;
                for i in 0..n {
                    tmp[i] = y[i]
                        + h * (A61 * f[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
                }
                rhs(t + h, tmp, k6)?;
                for i in 0..n {
                    y_new[i] =
                        y[i] + h * (B1 * f[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
                }
                rhs(t + h, y_new, f_new)?;
                for i in 0..n {
                    self.err[i] = h
                        * (E1 * f[i]
                            + E3 * k3[i]
                            + E4 * k4[i]
                            + E5 * k5[i]
                            + E6 * k6[i]
                            + E7 * f_new[i]);
                }
                Ok(Some(error_norm(&self.err, y, y_new, cfg)))
            }
        }
    }
}
