//! A config-driven run, the same path `ptflow run` takes, with the trace,
//! summary and chart written to a temporary directory.

use ptflow::config::ConfigMap;
use ptflow::experiment::{with_label, Experiment, ExperimentConfig};
use ptflow::report::{svg, trace_csv, Chart};

const CONFIG: &str = "
objective.name = trid
objective.dim = 2
flow.name = ptgf
flow.k = 0.1
flow.Tp = [5, 10, 15]
init.x0 = [-2, 3]
";

fn main() -> ptflow::Result<()> {
    let mut map = ConfigMap::parse(CONFIG)?;
    map.set("output.sample_count=500")?;
    let exp = Experiment::new(ExperimentConfig::from_map(&map)?)?;
    let dir = std::env::temp_dir().join("ptflow-example");
    std::fs::create_dir_all(&dir)?;
    for case in exp.cases() {
        let run = exp.run(&case)?;
        let s = &run.summary;
        println!(
            "Tp = {:>4}: |x - x*| = {:.3e}, settled at {:?}, envelope holds: {:?}",
            case.horizon.unwrap(),
            s.final_error.unwrap(),
            s.settling_time,
            s.envelope_holds
        );
        let csv = with_label(&dir.join("trid.csv"), &case.label);
        std::fs::write(&csv, trace_csv(&run.trajectory))?;
        let mut chart = Chart::from_trajectory(
            &run.trajectory,
            format!("Trid, Tp = {}", case.horizon.unwrap()),
        );
        chart.marker = case.horizon.map(|tp| (tp, "Tp".to_string()));
        std::fs::write(csv.with_extension("svg"), svg(&chart))?;
    }
    println!("traces and charts in {}", dir.display());
    Ok(())
}
