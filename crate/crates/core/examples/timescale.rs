//! The time-scale function, its integral, and the stretched clock.

use ptflow::timescale::TimeScaleParams;

fn main() -> ptflow::Result<()> {
    for r in 1..=3 {
        let ts = TimeScaleParams::new(0.0, 10.0, r)?;
        println!("r = {r}");
        println!(
            "  {:>10} {:>14} {:>14} {:>14}",
            "t", "T(t)", "int T", "s -> t"
        );
        for t in [0.0, 5.0, 9.0, 9.9, 9.999, 10.0 * (1.0 - 1e-6)] {
            let s = ts.stretched_time(t)?;
            println!(
                "  {t:>10.6} {:>14.6e} {:>14.6e} {:>14.10}",
                ts.eval(t)?,
                ts.integral(t)?,
                ts.physical_time(s)?
            );
        }
    }

    // integration stops at t0 + Tp (1 - delta_rel); the singular point itself
    // is outside the domain
    let ts = TimeScaleParams::with_horizon(10.0)?;
    println!("stop time for delta_rel = 1e-6: {}", ts.stop_time(1e-6));
    println!("T(Tp): {}", ts.eval(10.0).unwrap_err());
    Ok(())
}
