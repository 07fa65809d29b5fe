//! Raw time against stretched time, and RK4 against RK45.

use ptflow::flows::FlowSpec;
use ptflow::integrator::{integrate, IntegratorConfig, Method, Mode};
use ptflow::objectives::Objective;
use ptflow::timescale::TimeScaleParams;

fn main() -> ptflow::Result<()> {
    let obj = Objective::trid(2)?;
    let spec = FlowSpec::prescribed_time(0.1, TimeScaleParams::with_horizon(10.0)?)?;
    let x0 = [-2.0, 3.0];

    let base = IntegratorConfig {
        delta_rel: 1e-3,
        sample_count: 100,
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        ..IntegratorConfig::default()
    };
    let raw = integrate(
        &spec,
        Some(&obj),
        &x0,
        &IntegratorConfig {
            mode: Mode::RawTime,
            ..base.clone()
        },
    )?;
    let stretched = integrate(
        &spec,
        Some(&obj),
        &x0,
        &IntegratorConfig {
            mode: Mode::StretchedTime,
            ..base.clone()
        },
    )?;
    let worst = raw
        .states
        .iter()
        .zip(&stretched.states)
        .flat_map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(p, q)| (p - q).abs() / q.abs().max(1e-300))
        })
        .fold(0.0, f64::max);
    println!(
        "raw: {} steps, stretched: {} steps, max relative gap {worst:.2e}",
        raw.steps, stretched.steps
    );

    // fixed steps in stretched time; the step is measured in s
    let rk4 = integrate(
        &spec,
        Some(&obj),
        &x0,
        &IntegratorConfig {
            method: Method::Rk4,
            initial_step: Some(0.05),
            ..base.clone()
        },
    )?;
    let gap: f64 = rk4
        .final_state()
        .iter()
        .zip(stretched.final_state())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "rk4 (h = 0.05): {} steps, final gap to rk45 {gap:.2e}",
        rk4.steps
    );

    let capped = integrate(
        &spec,
        Some(&obj),
        &x0,
        &IntegratorConfig {
            max_steps: 10,
            ..base
        },
    )?;
    println!(
        "max_steps = 10: stop = {}, {} of 100 samples",
        capped.stop_reason.as_str(),
        capped.len()
    );
    Ok(())
}
