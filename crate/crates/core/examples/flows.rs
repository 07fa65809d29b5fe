//! The five flows side by side on Trid n=2 from a far start.

use ptflow::flows::FlowSpec;
use ptflow::integrator::{integrate, settling_time, IntegratorConfig};
use ptflow::objectives::{distance, Objective};
use ptflow::timescale::TimeScaleParams;

fn main() -> ptflow::Result<()> {
    let obj = Objective::trid(2)?;
    let x_star = obj.minimizer().unwrap().to_vec();
    let x0 = [-10.0, 25.0];
    let tp = 10.0;
    let cfg = IntegratorConfig {
        horizon: Some(tp),
        ..IntegratorConfig::default()
    };
    let ts = TimeScaleParams::with_horizon(tp)?;
    let flows = [
        FlowSpec::vanilla(0.1)?,
        FlowSpec::q_rescaled(0.1, 3.0)?,
        FlowSpec::q_signed(0.1, 4.0)?,
        FlowSpec::prescribed_time(0.1, ts)?,
        FlowSpec::prescribed_time_scheduled(|t| 0.1 + 0.01 * t, ts),
    ];
    println!(
        "{:<6} {:>12} {:>14} {:>10} {:>8} stop",
        "flow", "t_end", "|x - x*|", "settled", "steps"
    );
    for spec in &flows {
        let traj = integrate(spec, Some(&obj), &x0, &cfg)?;
        let settled =
            settling_time(&traj, &x_star, 1e-3).map_or("-".to_string(), |t| format!("{t:.3}"));
        println!(
            "{:<6} {:>12.6} {:>14.6e} {:>10} {:>8} {}",
            spec.name(),
            traj.t_stop,
            distance(traj.final_state(), &x_star),
            settled,
            traj.steps,
            traj.stop_reason.as_str()
        );
    }
    Ok(())
}
