//! The scalar prescribed-time regulator against its closed form.

use ptflow::diagnostics::regulator_bound_check;
use ptflow::flows::FlowSpec;
use ptflow::integrator::{integrate, IntegratorConfig};
use ptflow::timescale::TimeScaleParams;

fn main() -> ptflow::Result<()> {
    let ts = TimeScaleParams::with_horizon(10.0)?;
    let spec = FlowSpec::regulator(1.0, ts)?;
    let cfg = IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-300,
        ..IntegratorConfig::default()
    };
    let traj = integrate(&spec, None, &[5.0], &cfg)?;
    let exponent = spec.regulator_gain().unwrap() * ts.horizon();
    let worst = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| {
            let exact = 5.0 * (1.0 - t / 10.0).powf(exponent);
            (x[0] - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    println!("x(t) = 5 (1 - t/10)^{exponent}: max relative error {worst:.2e}");
    println!(
        "x(t_stop) = {:.3e} at t_stop = {}",
        traj.final_state()[0],
        traj.t_stop
    );

    let report = regulator_bound_check(&traj, 1.0, &ts)?;
    println!("bound with exp(-rho0 int T): holds = {}", report.holds);
    println!(
        "bound with exp(-2 rho0 int T): holds = {} (max violation {:.2e})",
        report.strict_holds, report.strict_max_violation
    );
    Ok(())
}
