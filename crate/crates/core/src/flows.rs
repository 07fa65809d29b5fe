//! Right-hand sides of the five flows: the classical gradient flow, the
//! q-rescaled and q-signed finite-time baselines, the prescribed-time
//! gradient flow `x' = -k(t) T(t) grad f(x)`, and the scalar prescribed-time
//! regulator `x' = -(rho0 + r/Tp) T(t) x`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::objectives::{norm, Objective};
use crate::timescale::TimeScaleParams;

/// Gradient norm at or below which the q-flows return the zero vector.
pub const ZERO_GRADIENT_GUARD: f64 = 1e-14;

/// Gain `k(t)` of the prescribed-time gradient flow.
#[derive(Clone)]
pub enum Gain {
    Constant(f64),
    /// Caller-supplied schedule; must stay positive on the horizon.
    Schedule(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Gain {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Gain::Constant(k) => *k,
            Gain::Schedule(f) => f(t),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Gain::Constant(k) => Some(*k),
            Gain::Schedule(_) => None,
        }
    }
}

impl fmt::Debug for Gain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gain::Constant(k) => write!(f, "Constant({k})"),
            Gain::Schedule(_) => f.write_str("Schedule(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FlowSpec {
    /// `x' = -c grad f`
    Vanilla { c: f64 },
    /// `x' = -c grad f / |grad f|^((q-2)/(q-1))`
    QRescaled { c: f64, q: f64 },
    /// `x' = -c grad f / |grad f|^(1/(q-1))`
    QSigned { c: f64, q: f64 },
    /// `x' = -k(t) T(t) grad f`
    PrescribedTime { gain: Gain, ts: TimeScaleParams },
    /// Scalar `x' = -(rho0 + r/Tp) T(t) x`, no objective.
    Regulator { rho0: f64, ts: TimeScaleParams },
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {v}")))
    }
}

fn above_one(v: f64) -> Result<f64> {
    if v > 1.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid("q", format!("must be > 1, got {v}")))
    }
}

impl FlowSpec {
    pub fn vanilla(c: f64) -> Result<Self> {
        Ok(FlowSpec::Vanilla {
            c: positive("c", c)?,
        })
    }

    pub fn q_rescaled(c: f64, q: f64) -> Result<Self> {
        Ok(FlowSpec::QRescaled {
            c: positive("c", c)?,
            q: above_one(q)?,
        })
    }

    pub fn q_signed(c: f64, q: f64) -> Result<Self> {
        Ok(FlowSpec::QSigned {
            c: positive("c", c)?,
            q: above_one(q)?,
        })
    }

    pub fn prescribed_time(k: f64, ts: TimeScaleParams) -> Result<Self> {
        Ok(FlowSpec::PrescribedTime {
            gain: Gain::Constant(positive("k", k)?),
            ts,
        })
    }

    pub fn prescribed_time_scheduled(
        schedule: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ts: TimeScaleParams,
    ) -> Self {
        FlowSpec::PrescribedTime {
            gain: Gain::Schedule(Arc::new(schedule)),
            ts,
        }
    }

    pub fn regulator(rho0: f64, ts: TimeScaleParams) -> Result<Self> {
        Ok(FlowSpec::Regulator {
            rho0: positive("rho0", rho0)?,
            ts,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowSpec::Vanilla { .. } => "gf",
            FlowSpec::QRescaled { .. } => "qrgf",
            FlowSpec::QSigned { .. } => "qsgf",
            FlowSpec::PrescribedTime { .. } => "ptgf",
            FlowSpec::Regulator { .. } => "ptreg",
        }
    }

    pub fn time_scale(&self) -> Option<&TimeScaleParams> {
        match self {
            FlowSpec::PrescribedTime { ts, .. } | FlowSpec::Regulator { ts, .. } => Some(ts),
            _ => None,
        }
    }

    pub fn is_gradient_flow(&self) -> bool {
        !matches!(self, FlowSpec::Regulator { .. })
    }

    /// Whether the literature's finite-time guarantee for strongly convex
    /// objectives (q in (2, inf)) applies. Informational only.
    pub fn finite_time_on_strongly_convex(&self) -> bool {
        match self {
            FlowSpec::QRescaled { q, .. } | FlowSpec::QSigned { q, .. } => *q > 2.0,
            _ => false,
        }
    }

    /// Effective regulator gain `rho0 + r/Tp`.
    pub fn regulator_gain(&self) -> Option<f64> {
        match self {
            FlowSpec::Regulator { rho0, ts } => Some(rho0 + ts.exponent() as f64 / ts.horizon()),
            _ => None,
        }
    }

    pub(crate) fn check_inputs(&self, obj: Option<&Objective>, dim: usize) -> Result<()> {
        match (self, obj) {
            (FlowSpec::Regulator { .. }, None) => {
                if dim != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: dim,
                    });
                }
                Ok(())
            }
            (FlowSpec::Regulator { .. }, Some(_)) => Err(Error::invalid(
                "objective",
                "the regulator takes no objective",
            )),
            (_, None) => Err(Error::invalid(
                "objective",
                "gradient flows need an objective",
            )),
            (_, Some(o)) => o.check_dim(dim),
        }
    }

    /// Velocity at `(t, x)`.
    pub fn field(&self, obj: Option<&Objective>, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(obj, x.len())?;
        let mut out = vec![0.0; x.len()];
        self.field_into(obj, t, x, &mut out)?;
        Ok(out)
    }

    /// Same as [`field`](Self::field) without input validation.
    pub(crate) fn field_into(
        &self,
        obj: Option<&Objective>,
        t: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            FlowSpec::Regulator { ts, .. } => {
                let gain = self.regulator_gain().unwrap() * ts.eval(t)?;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -gain * xi;
                }
                Ok(())
            }
            _ => {
                let obj = obj.expect("checked by caller");
                obj.gradient_into(x, out);
                let scale = match self {
                    FlowSpec::Vanilla { c } => *c,
                    FlowSpec::QRescaled { c, q } => {
                        guarded_scale(*c, norm(out), (q - 2.0) / (q - 1.0))
                    }
                    FlowSpec::QSigned { c, q } => guarded_scale(*c, norm(out), 1.0 / (q - 1.0)),
                    FlowSpec::PrescribedTime { gain, ts } => gain.at(t) * ts.eval(t)?,
                    FlowSpec::Regulator { .. } => unreachable!(),
                };
                out.iter_mut().for_each(|g| *g *= -scale);
                Ok(())
            }
        }
    }

    /// Velocity in stretched time `s`, where `ds = T(t) dt`. Only defined for
    /// the time-scaled flows with a constant gain.
    pub(crate) fn stretched_field_into(&self, obj: Option<&Objective>, x: &[f64], out: &mut [f64]) {
        match self {
            FlowSpec::PrescribedTime { gain, .. } => {
                let k = gain.constant().expect("constant gain checked by caller");
                obj.expect("checked by caller").gradient_into(x, out);
                out.iter_mut().for_each(|g| *g *= -k);
            }
            FlowSpec::Regulator { .. } => {
                let rho = self.regulator_gain().unwrap();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -rho * xi;
                }
            }
            _ => unreachable!("stretched time only applies to time-scaled flows"),
        }
    }
}

fn guarded_scale(c: f64, grad_norm: f64, power: f64) -> f64 {
    if grad_norm <= ZERO_GRADIENT_GUARD {
        0.0
    } else {
        c / grad_norm.powf(power)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_square(n: usize) -> Objective {
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Objective::quadratic(&a, &vec![0.0; n]).unwrap()
    }

    #[test]
    fn field_examples() {
        let ts = TimeScaleParams::with_horizon(1.0).unwrap();
        let pt = FlowSpec::prescribed_time(1.0, ts).unwrap();
        assert_eq!(
            pt.field(Some(&half_square(1)), 0.0, &[2.0]).unwrap(),
            vec![-2.0]
        );

        let reg = FlowSpec::regulator(1.0, TimeScaleParams::with_horizon(10.0).unwrap()).unwrap();
        let v = reg.field(None, 0.0, &[3.0]).unwrap();
        assert!((v[0] + 3.3).abs() < 1e-14);

        // hand evaluation: 5^(1/2) = 2.2360679774997896
        let qr = FlowSpec::q_rescaled(1.0, 3.0).unwrap();
        let v = qr.field(Some(&half_square(2)), 0.0, &[3.0, 4.0]).unwrap();
        assert!((v[0] + 3.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((v[1] + 4.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((v[0] + 1.3416).abs() < 1e-4 && (v[1] + 1.7889).abs() < 1e-4);
    }

    #[test]
    fn q_flows_vanish_at_zero_gradient() {
        let obj = half_square(2);
        for spec in [
            FlowSpec::q_rescaled(1.0, 3.0).unwrap(),
            FlowSpec::q_signed(2.0, 1.5).unwrap(),
        ] {
            assert_eq!(
                spec.field(Some(&obj), 0.0, &[0.0, 0.0]).unwrap(),
                vec![0.0, 0.0]
            );
            assert_eq!(
                spec.field(Some(&obj), 0.0, &[1e-15, 0.0]).unwrap(),
                vec![0.0, 0.0]
            );
        }
    }

    #[test]
    fn q_signed_power() {
        let obj = half_square(2);
        // q = 2: exponent 1 -> unit-speed normalized gradient
        let v = FlowSpec::q_signed(1.0, 2.0)
            .unwrap()
            .field(Some(&obj), 0.0, &[3.0, 4.0])
            .unwrap();
        assert!((v[0] + 0.6).abs() < 1e-15 && (v[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let ts = TimeScaleParams::with_horizon(1.0).unwrap();
        let pt = FlowSpec::prescribed_time(1.0, ts).unwrap();
        let obj = half_square(2);
        assert!(matches!(
            pt.field(Some(&obj), 0.0, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            pt.field(Some(&obj), 1.0, &[1.0, 1.0]),
            Err(Error::Domain { .. })
        ));
        assert!(pt.field(None, 0.0, &[1.0, 1.0]).is_err());
        let reg = FlowSpec::regulator(1.0, ts).unwrap();
        assert!(reg.field(Some(&obj), 0.0, &[1.0]).is_err());
        assert!(reg.field(None, 0.0, &[1.0, 2.0]).is_err());
        assert!(FlowSpec::vanilla(0.0).is_err());
        assert!(FlowSpec::q_rescaled(1.0, 1.0).is_err());
        assert!(FlowSpec::prescribed_time(-1.0, ts).is_err());
    }

    #[test]
    fn scheduled_gain() {
        let ts = TimeScaleParams::with_horizon(2.0).unwrap();
        let spec = FlowSpec::prescribed_time_scheduled(|t| 1.0 + t, ts);
        let v = spec.field(Some(&half_square(1)), 1.0, &[1.0]).unwrap();
        assert!((v[0] + 2.0 * 2.0).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn objectives() -> Vec<Objective> {
            vec![
                Objective::trid(2).unwrap(),
                Objective::rosenbrock(2).unwrap(),
                Objective::quadratic(&[vec![1.0, 0.0], vec![0.0, 4.0]], &[1.0, 0.0]).unwrap(),
            ]
        }

        proptest! {
            #[test]
            fn every_gradient_flow_descends(x0 in -5.0..5.0f64, x1 in -5.0..5.0f64, t in 0.0..9.9f64, q in 1.1..5.0f64) {
                let ts = TimeScaleParams::with_horizon(10.0).unwrap();
                let specs = [
                    FlowSpec::vanilla(0.7).unwrap(),
                    FlowSpec::q_rescaled(0.7, q).unwrap(),
                    FlowSpec::q_signed(0.7, q).unwrap(),
                    FlowSpec::prescribed_time(0.1, ts).unwrap(),
                ];
                for obj in objectives() {
                    let x = [x0, x1];
                    let g = obj.gradient(&x);
                    if norm(&g) <= ZERO_GRADIENT_GUARD { continue; }
                    for spec in &specs {
                        let v = spec.field(Some(&obj), t, &x).unwrap();
                        let dot: f64 = v.iter().zip(&g).map(|(a, b)| a * b).sum();
                        prop_assert!(dot < 0.0, "{} on {}", spec.name(), obj.name());
                    }
                }
            }

            #[test]
            fn prescribed_is_scaled_vanilla(k in 0.01..5.0f64, frac in 0.0..0.999f64, x0 in -5.0..5.0f64, x1 in -5.0..5.0f64, r in 1u32..4) {
                let ts = TimeScaleParams::new(0.0, 3.0, r).unwrap();
                let t = frac * 3.0;
                let obj = Objective::trid(2).unwrap();
                let pt = FlowSpec::prescribed_time(k, ts).unwrap().field(Some(&obj), t, &[x0, x1]).unwrap();
                let gf = FlowSpec::vanilla(k).unwrap().field(Some(&obj), t, &[x0, x1]).unwrap();
                let scale = ts.eval(t).unwrap();
                for i in 0..2 {
                    let expect = gf[i] * scale;
                    prop_assert!((pt[i] - expect).abs() <= 1e-14 * expect.abs());
                }
            }

            #[test]
            fn regulator_is_linear(x in -100.0..100.0f64, alpha in -10.0..10.0f64, frac in 0.0..0.99f64) {
                let ts = TimeScaleParams::with_horizon(10.0).unwrap();
                let reg = FlowSpec::regulator(1.0, ts).unwrap();
                let t = frac * 10.0;
                let a = reg.field(None, t, &[alpha * x]).unwrap()[0];
                let b = reg.field(None, t, &[x]).unwrap()[0];
                prop_assert!((a - alpha * b).abs() <= 4.0 * f64::EPSILON * a.abs());
            }

            #[test]
            fn q_rescaled_tends_to_vanilla(theta in 0.0..std::f64::consts::TAU) {
                // points with |grad f| = 1 on f = 1/2 |x|^2
                let obj = half_square(2);
                let x = [theta.cos(), theta.sin()];
                let qr = FlowSpec::q_rescaled(1.3, 2.0 + 1e-9).unwrap().field(Some(&obj), 0.0, &x).unwrap();
                let gf = FlowSpec::vanilla(1.3).unwrap().field(Some(&obj), 0.0, &x).unwrap();
                for i in 0..2 {
                    prop_assert!((qr[i] - gf[i]).abs() <= 1e-12 * gf[i].abs().max(1e-300) + 1e-15);
                }
            }
        }
    }
}
