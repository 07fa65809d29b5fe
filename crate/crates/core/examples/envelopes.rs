//! Lyapunov envelopes on a quadratic and the disturbed scalar inequality.

use ptflow::diagnostics::{annotate, disturbed_oracle, EnvelopeSpec};
use ptflow::flows::FlowSpec;
use ptflow::integrator::{integrate, IntegratorConfig};
use ptflow::objectives::Objective;
use ptflow::timescale::TimeScaleParams;

fn main() -> ptflow::Result<()> {
    let ts = TimeScaleParams::with_horizon(10.0)?;
    let spec = FlowSpec::prescribed_time(0.1, ts)?;
    let cfg = IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-300,
        ..IntegratorConfig::default()
    };
    let quad = Objective::quadratic(&[vec![1.0, 0.0], vec![0.0, 4.0]], &[0.0, 0.0])?;
    let mut traj = integrate(&spec, Some(&quad), &[1.0, 1.0], &cfg)?;

    let pl = annotate(&mut traj, Some(&quad), &EnvelopeSpec::pl(1.0, 0.1, ts)?)?;
    println!(
        "PŁ envelope (sigma = 1): holds = {}, max violation = {:.2e}",
        pl.holds, pl.max_violation
    );
    for i in (0..traj.len()).step_by(200) {
        println!(
            "  t = {:>8.4}  V = {:.6e}  bound = {:.6e}",
            traj.times[i], traj.lyap_vals[i], traj.envelope_vals[i]
        );
    }
    let sc = annotate(
        &mut traj,
        Some(&quad),
        &EnvelopeSpec::strongly_convex(1.0, 0.1, ts)?,
    )?;
    println!("strong-convexity envelope (mu = 1): holds = {}", sc.holds);

    let unit = TimeScaleParams::with_horizon(1.0)?;
    for (name, rho, lambda, l) in [
        ("L = 0", 1.0, 1.0, (|_| 0.0) as fn(f64) -> f64),
        ("L = 1", 1.0, 1.0, |_| 1.0),
        ("L = sin 10t", 0.5, 2.0, |t: f64| (10.0 * t).sin()),
    ] {
        let run = disturbed_oracle(rho, lambda, &l, unit, 1.0, unit.stop_time(1e-6))?;
        println!(
            "{name:<12} V(end) = {:.3e}  bound(end) = {:.3e}  holds = {}",
            run.v.last().unwrap(),
            run.bound.last().unwrap(),
            run.holds
        );
    }
    Ok(())
}
