use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn recipe(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("recipes")
        .join(name)
}

fn ptflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptflow"))
        .current_dir(dir)
        .args(args)
        .env_remove("PTFLOW_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const QUAD: &str = "
objective.name = quadratic
objective.A = [[1]]
objective.b = [0]
";

#[test]
fn run_writes_trace_summary_and_chart() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "trid.cfg",
        "objective.name = trid\nobjective.dim = 3\nflow.name = ptgf\nflow.k = 0.5\nflow.Tp = 4\n\
         init.x0 = [0, 1, 2]\noutput.sample_count = 250\noutput.csv_path = out/a.csv\n\
         output.json_path = out/a.json\noutput.svg_path = out/a.svg\n",
    );
    let o = ptflow(dir.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let table = rows(&dir.path().join("out/a.csv"));
    assert_eq!(table[0].join(","), "t,x0,x1,x2,f,grad_norm,V,envelope");
    assert_eq!(table.len(), 251);
    let t: Vec<f64> = table[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*t.last().unwrap(), 4.0 * (1.0 - 1e-6));
    // scientific notation with 17 significant digits
    assert!(table[2][1].contains('e') && table[2][1].split('e').next().unwrap().len() >= 17);

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/a.json")).unwrap()).unwrap();
    for key in [
        "final_state",
        "final_f",
        "settling_time",
        "envelope_holds",
        "max_violation",
        "stop_reason",
        "wall_time",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["stop_reason"], "reached_t_stop");
    assert!(json["wall_time"].is_null());
    assert_eq!(json["settings"]["integrator.rel_tol"], "0.00000001");
    let ts = json["settling_time"].as_f64().unwrap();
    assert!(ts <= json["t_stop"].as_f64().unwrap());

    let svg = fs::read_to_string(dir.path().join("out/a.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert!(svg.contains("flow.k = 0.5"));
}

#[test]
fn set_overrides_config_values() {
    let dir = TempDir::new().unwrap();
    let o = ptflow(
        dir.path(),
        &[
            "run",
            recipe("trid_horizons.cfg").to_str().unwrap(),
            "--set",
            "flow.Tp=7",
            "--set",
            "output.svg_path=chart.svg",
            "--set",
            "output.sample_count=10",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(rows(&dir.path().join("out/trid_horizons.csv")).len(), 11);
    assert!(dir.path().join("chart.svg").exists());
    assert!(!dir.path().join("out/trid_horizons_Tp5.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let trid_horizons = recipe("trid_horizons.cfg");
    let trid_horizons = trid_horizons.to_str().unwrap();

    let o = ptflow(d, &["run", trid_horizons, "--set", "flow.kk=1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`flow.kk`"), "{}", stderr(&o));

    let o = ptflow(d, &["run", trid_horizons, "--set", "init.x0=[1, 2, 3]"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`init.x0`"));

    let o = ptflow(d, &["run", "missing.cfg"]);
    assert_eq!(code(&o), 2);

    let o = ptflow(
        d,
        &[
            "run",
            trid_horizons,
            "--set",
            "integrator.max_steps=10",
            "--set",
            "flow.Tp=5",
        ],
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("max_steps"));

    let o = ptflow(
        d,
        &[
            "sweep",
            recipe("trid_starts.cfg").to_str().unwrap(),
            "--set",
            "init.sweep=[]",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`init.sweep`"));

    let o = ptflow(
        d,
        &[
            "sweep",
            trid_horizons,
            "--set",
            "init.x0=[0, 0]",
            "--set",
            "flow.Tp=5",
        ],
    );
    assert_eq!(code(&o), 2);

    let o = ptflow(d, &["verify", trid_horizons]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`verify.kind`"));

    let o = ptflow(d, &["bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_reports_and_signals_violations() {
    let dir = TempDir::new().unwrap();
    let o = ptflow(
        dir.path(),
        &[
            "verify",
            recipe("verify_quadratic_pl.cfg").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("sigma_hat: 1.000000000000e0"), "{out}");

    let o = ptflow(
        dir.path(),
        &[
            "verify",
            recipe("verify_quadratic_sc.cfg").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 1);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("violating pairs"));
    assert!(
        out.lines().any(|l| l.trim_start().starts_with('[')),
        "no pair printed: {out}"
    );

    let o = ptflow(
        dir.path(),
        &[
            "verify",
            recipe("verify_rosenbrock_pl.cfg").to_str().unwrap(),
        ],
    );
    assert!(code(&o) == 0 || code(&o) == 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sigma_hat"));
}

#[test]
fn sweep_rows_follow_config_order_for_any_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = recipe("rosenbrock_grid.cfg");
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_ptflow"))
            .current_dir(dir.path())
            .args([
                "sweep",
                cfg.to_str().unwrap(),
                "--set",
                &format!("output.csv_path={out}"),
            ])
            .args([
                "--set",
                "output.json_path=none.json",
                "--set",
                "output.sample_count=50",
            ])
            .env("PTFLOW_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(dir.path().join(out)).unwrap()
    };
    let one = run("1", "one.csv");
    let four = run("4", "four.csv");
    assert_eq!(one, four);
    let table = rows(&dir.path().join("one.csv"));
    assert_eq!(
        table[0].join(","),
        "x0,x1,settling_time,final_error,envelope_holds,status"
    );
    assert_eq!(table.len(), 17);
    let firsts: Vec<(f64, f64)> = table[1..]
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    assert_eq!(firsts[0], (-1.0, -1.0));
    assert_eq!(firsts[1], (-1.0, -0.5));
    assert_eq!(firsts[15], (0.5, 0.5));
}

/// Settling times of the prescribed-time flow stay below Tp for every
/// magnitude, while the classical flow on x^2/2 needs ln(|x0| / eps) / c.
#[test]
fn sweep_over_magnitudes_against_vanilla_oracle() {
    let dir = TempDir::new().unwrap();
    let text = format!("{QUAD}init.sweep = [[1], [10], [100]]\noutput.csv_path = agg.csv\nintegrator.rel_tol = 1e-12\nintegrator.abs_tol = 1e-300\n");
    let cfg = write_config(dir.path(), "m.cfg", &text);
    let cfg = cfg.to_str().unwrap();

    let tp = 5.0;
    let o = ptflow(
        dir.path(),
        &[
            "sweep",
            cfg,
            "--set",
            "flow.name=ptgf",
            "--set",
            "flow.Tp=5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for row in &rows(&dir.path().join("agg.csv"))[1..] {
        let ts: f64 = row[1].parse().unwrap();
        assert!(ts <= tp);
    }

    let (c, horizon, samples, eps) = (1.0, 20.0, 1000.0, 1e-3);
    let o = ptflow(
        dir.path(),
        &[
            "sweep",
            cfg,
            "--set",
            "flow.name=gf",
            "--set",
            "integrator.horizon=20",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = rows(&dir.path().join("agg.csv"));
    let spacing = horizon / (samples - 1.0);
    let mut previous = 0.0;
    for (row, x0) in table[1..].iter().zip([1.0f64, 10.0, 100.0]) {
        let ts: f64 = row[1].parse().unwrap();
        let oracle = (x0 / eps).ln() / c;
        assert!(
            ts >= oracle - 1e-9 && ts <= oracle + spacing,
            "x0 = {x0}: {ts} vs {oracle}"
        );
        assert!(ts > previous);
        previous = ts;
    }
}

#[test]
fn regulator_recipe_runs() {
    let dir = TempDir::new().unwrap();
    let o = ptflow(
        dir.path(),
        &["run", recipe("regulator.cfg").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/regulator.json")).unwrap())
            .unwrap();
    assert_eq!(json["objective"], "none");
    assert_eq!(json["envelope"], "regulator");
    assert_eq!(json["envelope_holds"], true);
}

#[test]
fn plot_renders_trace_columns() {
    let dir = TempDir::new().unwrap();
    let o = ptflow(
        dir.path(),
        &[
            "run",
            recipe("trid_horizons.cfg").to_str().unwrap(),
            "--set",
            "flow.Tp=10",
        ],
    );
    assert_eq!(code(&o), 0);
    let o = ptflow(
        dir.path(),
        &[
            "plot",
            "out/trid_horizons.csv",
            "-o",
            "plots/trid_horizons.svg",
            "--tp",
            "10",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("plots/trid_horizons.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">Tp</text>"));

    let o = ptflow(dir.path(), &["plot", "nothing.csv", "-o", "x.svg"]);
    assert_eq!(code(&o), 2);
}
