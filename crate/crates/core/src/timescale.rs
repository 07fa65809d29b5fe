//! The monotone time-scaling gain
//!
//! `T(t) = Tp^r / (Tp + t0 - t)^r` on `[t0, t0 + Tp)`, together with its
//! derivative, its closed-form integral and the stretched clock `s(t)`
//! defined by `ds = T(t) dt`.
//!
//! All evaluations outside `[t0, t0 + Tp)` are errors. Clamping near the
//! terminal time is the integrator's job.

use crate::error::{Error, Result};

/// Parameters `(t0, Tp, r)` of the time-scaling gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScaleParams {
    t0: f64,
    horizon: f64,
    exponent: u32,
}

impl TimeScaleParams {
    pub fn new(t0: f64, horizon: f64, exponent: u32) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("Tp", format!("must be > 0, got {horizon}")));
        }
        if exponent < 1 {
            return Err(Error::invalid("r", "must be >= 1"));
        }
        Ok(Self {
            t0,
            horizon,
            exponent,
        })
    }

    /// `t0 = 0`, `r = 1`.
    pub fn with_horizon(horizon: f64) -> Result<Self> {
        Self::new(0.0, horizon, 1)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Prescribed horizon `Tp`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    /// Terminal time `t0 + Tp`, excluded from the domain.
    pub fn terminal_time(&self) -> f64 {
        self.t0 + self.horizon
    }

    /// Stop time `t0 + Tp (1 - delta_rel)`.
    pub fn stop_time(&self, delta_rel: f64) -> f64 {
        self.t0 + self.horizon * (1.0 - delta_rel)
    }

    /// Remaining fraction `u = (Tp + t0 - t) / Tp` in `(0, 1]`.
    fn remaining(&self, t: f64) -> Result<f64> {
        let end = self.terminal_time();
        if !(t >= self.t0 && t < end) {
            return Err(Error::Domain {
                t,
                start: self.t0,
                end,
            });
        }
        let u = 1.0 - (t - self.t0) / self.horizon;
        if u <= 0.0 {
            return Err(Error::Domain {
                t,
                start: self.t0,
                end,
            });
        }
        Ok(u)
    }

    /// `T(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let u = self.remaining(t)?;
        Ok(u.powi(-(self.exponent as i32)))
    }

    /// `dT/dt = r Tp^r / (Tp + t0 - t)^(r+1)`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        let u = self.remaining(t)?;
        let r = self.exponent as i32;
        Ok(r as f64 / self.horizon * u.powi(-(r + 1)))
    }

    /// `int_{t0}^{t} T(tau) dtau`, closed form.
    pub fn integral(&self, t: f64) -> Result<f64> {
        let u = self.remaining(t)?;
        let tp = self.horizon;
        if self.exponent == 1 {
            // ln(u) via ln_1p keeps precision for t close to t0
            Ok(-tp * (-(t - self.t0) / tp).ln_1p())
        } else {
            let m = (self.exponent - 1) as i32;
            Ok(tp / m as f64 * (u.powi(-m) - 1.0))
        }
    }

    /// Stretched time `s(t)`; identical to [`integral`](Self::integral).
    pub fn stretched_time(&self, t: f64) -> Result<f64> {
        self.integral(t)
    }

    /// Inverse of [`stretched_time`](Self::stretched_time).
    pub fn physical_time(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) || s.is_infinite() {
            return Err(Error::invalid(
                "s",
                format!("must be finite and >= 0, got {s}"),
            ));
        }
        let tp = self.horizon;
        let elapsed = if self.exponent == 1 {
            -tp * (-s / tp).exp_m1()
        } else {
            let m = (self.exponent - 1) as f64;
            let u = (1.0 + s * m / tp).powf(-1.0 / m);
            tp * (1.0 - u)
        };
        Ok(self.t0 + elapsed)
    }
}
