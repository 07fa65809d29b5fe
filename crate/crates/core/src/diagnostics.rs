//! Lyapunov envelopes and the checks built on them.
//!
//! Every envelope has the form `V(t) <= V0 exp(-2 m int_{t0}^{t} T) + offset`,
//! with `m = sigma k` (PŁ, `V = f - f*`), `m = mu k` (strong convexity,
//! `V = |x - x*|^2`), `m = rho0` (regulator, `V = x^2 / 2`) or `m = rho` plus
//! `offset = sup L^2 / (8 rho lambda)` for the disturbed scalar inequality.
//! Gains are constants; a time-varying `k` would have to move inside the
//! integral.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{self, IntegratorConfig, StopReason, Trajectory};
use crate::objectives::{distance, Objective};
use crate::timescale::TimeScaleParams;

/// Relative slack on envelope comparisons.
pub const ENVELOPE_REL_TOL: f64 = 1e-8;
/// Absolute slack on envelope comparisons.
pub const ENVELOPE_ABS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeSpec {
    Pl {
        sigma: f64,
        gain: f64,
        ts: TimeScaleParams,
    },
    StronglyConvex {
        mu: f64,
        gain: f64,
        ts: TimeScaleParams,
    },
    Regulator {
        rho0: f64,
        ts: TimeScaleParams,
    },
    Disturbed {
        rho: f64,
        lambda: f64,
        sup_l: f64,
        ts: TimeScaleParams,
    },
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {v}")))
    }
}

impl EnvelopeSpec {
    pub fn pl(sigma: f64, gain: f64, ts: TimeScaleParams) -> Result<Self> {
        Ok(Self::Pl {
            sigma: positive("sigma", sigma)?,
            gain: positive("k", gain)?,
            ts,
        })
    }

    pub fn strongly_convex(mu: f64, gain: f64, ts: TimeScaleParams) -> Result<Self> {
        Ok(Self::StronglyConvex {
            mu: positive("mu", mu)?,
            gain: positive("k", gain)?,
            ts,
        })
    }

    pub fn regulator(rho0: f64, ts: TimeScaleParams) -> Result<Self> {
        Ok(Self::Regulator {
            rho0: positive("rho0", rho0)?,
            ts,
        })
    }

    pub fn disturbed(rho: f64, lambda: f64, sup_l: f64, ts: TimeScaleParams) -> Result<Self> {
        if !(sup_l >= 0.0 && sup_l.is_finite()) {
            return Err(Error::invalid("sup_l", "must be finite and >= 0"));
        }
        Ok(Self::Disturbed {
            rho: positive("rho", rho)?,
            lambda: positive("lambda", lambda)?,
            sup_l,
            ts,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Pl { .. } => "pl",
            Self::StronglyConvex { .. } => "sc",
            Self::Regulator { .. } => "regulator",
            Self::Disturbed { .. } => "disturbed",
        }
    }

    pub fn time_scale(&self) -> &TimeScaleParams {
        match self {
            Self::Pl { ts, .. }
            | Self::StronglyConvex { ts, .. }
            | Self::Regulator { ts, .. }
            | Self::Disturbed { ts, .. } => ts,
        }
    }

    /// Decay rate multiplying `-2 int T`.
    fn rate(&self) -> f64 {
        match *self {
            Self::Pl { sigma, gain, .. } => sigma * gain,
            Self::StronglyConvex { mu, gain, .. } => mu * gain,
            Self::Regulator { rho0, .. } => rho0,
            Self::Disturbed { rho, .. } => rho,
        }
    }

    fn offset(&self) -> f64 {
        match *self {
            Self::Disturbed {
                rho, lambda, sup_l, ..
            } => sup_l * sup_l / (8.0 * rho * lambda),
            _ => 0.0,
        }
    }

    /// Upper bound on `V(t)` given `V(t0) = v0`.
    pub fn envelope(&self, t: f64, v0: f64) -> Result<f64> {
        if !(v0 >= 0.0) {
            return Err(Error::invalid("V0", "must be >= 0"));
        }
        let integral = self.time_scale().integral(t)?;
        Ok(v0 * (-2.0 * self.rate() * integral).exp() + self.offset())
    }

    /// The Lyapunov function this envelope bounds, evaluated at `x`.
    pub fn lyapunov(&self, obj: Option<&Objective>, x: &[f64]) -> Result<f64> {
        match self {
            Self::Pl { .. } => {
                let obj = require_objective(obj)?;
                let f_star = obj.min_value().ok_or_else(|| Error::MissingMetadata {
                    objective: obj.name().to_string(),
                    what: "a known minimum value",
                })?;
                Ok(obj.value(x) - f_star)
            }
            Self::StronglyConvex { .. } => {
                let obj = require_objective(obj)?;
                let x_star = obj.minimizer().ok_or_else(|| Error::MissingMetadata {
                    objective: obj.name().to_string(),
                    what: "a known minimizer",
                })?;
                Ok(distance(x, x_star).powi(2))
            }
            Self::Regulator { .. } | Self::Disturbed { .. } => {
                if x.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: x.len(),
                    });
                }
                Ok(0.5 * x[0] * x[0])
            }
        }
    }
}

fn require_objective(obj: Option<&Objective>) -> Result<&Objective> {
    obj.ok_or_else(|| Error::invalid("objective", "this envelope needs an objective"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    /// Largest `(V - envelope) / envelope` over samples, 0 when never above.
    pub max_violation: f64,
    pub holds: bool,
}

fn within(v: f64, bound: f64) -> bool {
    v <= bound * (1.0 + ENVELOPE_REL_TOL) + ENVELOPE_ABS_TOL
}

fn exceedance(v: f64, bound: f64) -> f64 {
    if v <= bound {
        0.0
    } else if bound > 0.0 {
        (v - bound) / bound
    } else {
        f64::INFINITY
    }
}

/// Writes `V` and the envelope into `traj.lyap_vals` / `traj.envelope_vals`
/// and reports whether the envelope dominates at every sample.
pub fn annotate(
    traj: &mut Trajectory,
    obj: Option<&Objective>,
    spec: &EnvelopeSpec,
) -> Result<EnvelopeReport> {
    if traj.is_empty() {
        return Err(Error::invalid("trajectory", "no samples"));
    }
    let lyap = traj
        .states
        .iter()
        .map(|x| spec.lyapunov(obj, x))
        .collect::<Result<Vec<f64>>>()?;
    let v0 = lyap[0];
    let env = traj
        .times
        .iter()
        .map(|&t| spec.envelope(t, v0))
        .collect::<Result<Vec<f64>>>()?;
    let mut report = EnvelopeReport {
        max_violation: 0.0,
        holds: true,
    };
    for (&v, &e) in lyap.iter().zip(&env) {
        report.max_violation = report.max_violation.max(exceedance(v, e));
        report.holds &= within(v, e);
    }
    traj.lyap_vals = lyap;
    traj.envelope_vals = env;
    Ok(report)
}

/// Same as [`annotate`] without touching the trajectory.
pub fn check_envelope(
    traj: &Trajectory,
    obj: Option<&Objective>,
    spec: &EnvelopeSpec,
) -> Result<EnvelopeReport> {
    let mut scratch = traj.clone();
    annotate(&mut scratch, obj, spec)
}

/// Output of [`disturbed_oracle`].
#[derive(Debug, Clone)]
pub struct DisturbedRun {
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    pub bound: Vec<f64>,
    /// Sup of `|L|` over the sample grid (a lower bound of the true sup).
    pub sup_l: f64,
    pub holds: bool,
    pub max_violation: f64,
}

/// Number of samples used by [`disturbed_oracle`].
pub const DISTURBED_SAMPLES: usize = 1000;

/// Integrates `V' = -2 rho T V + T L(t)^2 / (4 lambda)` with equality from
/// `V(t0) = v0` to `t_stop` and compares it with
/// `exp(-2 rho int T) v0 + sup L^2 / (8 rho lambda)`.
///
/// The ODE is solved in stretched time, `dV/ds = -2 rho V + L(t(s))^2 / (4 lambda)`.
pub fn disturbed_oracle(
    rho: f64,
    lambda: f64,
    disturbance: &dyn Fn(f64) -> f64,
    ts: TimeScaleParams,
    v0: f64,
    t_stop: f64,
) -> Result<DisturbedRun> {
    positive("rho", rho)?;
    positive("lambda", lambda)?;
    if !(v0 >= 0.0) {
        return Err(Error::invalid("V0", "must be >= 0"));
    }
    if !(t_stop > ts.t0() && t_stop < ts.terminal_time()) {
        return Err(Error::Domain {
            t: t_stop,
            start: ts.t0(),
            end: ts.terminal_time(),
        });
    }
    let n = DISTURBED_SAMPLES;
    let mut times: Vec<f64> = (0..n)
        .map(|i| ts.t0() + (t_stop - ts.t0()) * i as f64 / (n - 1) as f64)
        .collect();
    times[n - 1] = t_stop;
    let grid = times
        .iter()
        .map(|&t| ts.stretched_time(t))
        .collect::<Result<Vec<f64>>>()?;

    let rhs = |s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let t = ts.physical_time(s)?;
        let l = disturbance(t);
        dy[0] = -2.0 * rho * y[0] + l * l / (4.0 * lambda);
        Ok(())
    };
    let sup_l = times
        .iter()
        .map(|&t| disturbance(t).abs())
        .fold(0.0, f64::max);
    let spec = EnvelopeSpec::disturbed(rho, lambda, sup_l, ts)?;
    // pure relative control unless V starts at 0
    let abs_tol = if v0 > 0.0 {
        1e-300
    } else {
        (1e-16 * spec.offset()).max(1e-300)
    };
    let cfg = IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol,
        ..Default::default()
    };
    let (samples, stop) = integrator::solve_on_grid(&rhs, &[v0], &grid, &cfg)?;
    if stop != StopReason::ReachedTStop {
        return Err(Error::invalid(
            "disturbed",
            format!("integration stopped early: {}", stop.as_str()),
        ));
    }
    let v: Vec<f64> = samples.into_iter().map(|y| y[0]).collect();

    let bound = times
        .iter()
        .map(|&t| spec.envelope(t, v0))
        .collect::<Result<Vec<f64>>>()?;
    let mut holds = true;
    let mut max_violation = 0.0f64;
    for (&vi, &bi) in v.iter().zip(&bound) {
        holds &= vi <= bi * (1.0 + ENVELOPE_REL_TOL);
        max_violation = max_violation.max(exceedance(vi, bi));
    }
    Ok(DisturbedRun {
        times,
        v,
        bound,
        sup_l,
        holds,
        max_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegulatorReport {
    /// Against `|x| <= T^{-1} exp(-rho0 int T) |x0|`.
    pub max_violation: f64,
    pub holds: bool,
    /// Against the stricter `|x| <= T^{-1} exp(-2 rho0 int T) |x0|`, which
    /// does not follow from the quadratic Lyapunov bound and is expected to
    /// fail for `t > t0`.
    pub strict_max_violation: f64,
    pub strict_holds: bool,
}

pub fn regulator_bound_check(
    traj: &Trajectory,
    rho0: f64,
    ts: &TimeScaleParams,
) -> Result<RegulatorReport> {
    positive("rho0", rho0)?;
    if traj.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: traj.dim(),
        });
    }
    let x0 = traj.states[0][0].abs();
    let mut report = RegulatorReport {
        max_violation: 0.0,
        holds: true,
        strict_max_violation: 0.0,
        strict_holds: true,
    };
    if x0 == 0.0 {
        report.holds = traj.states.iter().all(|x| x[0] == 0.0);
        report.strict_holds = report.holds;
        if !report.holds {
            report.max_violation = f64::INFINITY;
            report.strict_max_violation = f64::INFINITY;
        }
        return Ok(report);
    }
    // compared in log space: both sides underflow long before t_stop
    let slack = ENVELOPE_REL_TOL.ln_1p();
    for (&t, x) in traj.times.iter().zip(&traj.states) {
        let ln_x = x[0].abs().ln();
        let base = x0.ln() - ts.eval(t)?.ln();
        let integral = ts.integral(t)?;
        let ln_bound = base - rho0 * integral;
        let ln_strict = base - 2.0 * rho0 * integral;
        report.holds &= ln_x <= ln_bound + slack;
        report.max_violation = report.max_violation.max(log_exceedance(ln_x, ln_bound));
        report.strict_holds &= ln_x <= ln_strict + slack;
        report.strict_max_violation = report
            .strict_max_violation
            .max(log_exceedance(ln_x, ln_strict));
    }
    Ok(report)
}

fn log_exceedance(ln_v: f64, ln_bound: f64) -> f64 {
    if ln_v <= ln_bound {
        0.0
    } else {
        (ln_v - ln_bound).exp_m1()
    }
}
