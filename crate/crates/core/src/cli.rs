//! The `ptflow` commands. Each returns a process exit code:
//! 0 success, 1 verification found violations, 2 config error, 3 runtime
//! failure or incomplete integration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::{
    with_label, Experiment, ExperimentConfig, InitSource, RunOutput, VerifyKind,
};
use crate::objectives::{verify_pl, verify_strong_convexity, BoxDomain};
use crate::report::{self, Chart, CsvTable, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Caps sweep parallelism when set to a positive integer.
pub const THREADS_ENV: &str = "PTFLOW_THREADS";

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn finish(result: Result<i32>, err: &mut dyn Write) -> i32 {
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Creates parent directories so that unwritable paths fail before any
/// integration work.
fn prepare(path: &Option<PathBuf>, key: &str) -> Result<()> {
    if let Some(p) = path {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)
                .map_err(|e| Error::config(key, format!("cannot create {}: {e}", dir.display())))?;
        }
        if p.is_dir() {
            return Err(Error::config(
                key,
                format!("{} is a directory", p.display()),
            ));
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.6e}"))
}

fn chart_for(run: &RunOutput, exp: &Experiment) -> Chart {
    let s = &run.summary;
    let title = match s.horizon {
        Some(tp) => format!("{} / {}, Tp = {tp}", s.objective, s.flow),
        None => format!("{} / {}", s.objective, s.flow),
    };
    let mut chart = Chart::from_trajectory(&run.trajectory, title);
    if let (Some(tp), Some(f)) = (s.horizon, exp.config().flow.as_ref()) {
        chart.marker = Some((f.t0 + tp, "Tp".into()));
    }
    chart.notes = s
        .settings
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    chart
}

/// `ptflow run`: one trace (CSV, JSON, optional SVG) per case.
pub fn run(config: &Path, overrides: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<i32> {
        let cfg = ExperimentConfig::load(config, overrides)?;
        let exp = Experiment::new(cfg)?;
        let o = &exp.config().output;
        prepare(&o.csv_path, "output.csv_path")?;
        prepare(&o.json_path, "output.json_path")?;
        prepare(&o.svg_path, "output.svg_path")?;
        let mut code = EXIT_OK;
        for case in exp.cases() {
            let name = if case.label.is_empty() {
                "run".to_string()
            } else {
                case.label.clone()
            };
            let run = match exp.run(&case) {
                Ok(r) => r,
                Err(e) => {
                    writeln!(err, "{name}: error: {e}")?;
                    code = code.max(exit_code(&e));
                    continue;
                }
            };
            if let Some(p) = &o.csv_path {
                write_file(
                    &with_label(p, &case.label),
                    &report::trace_csv(&run.trajectory),
                )?;
            }
            if let Some(p) = &o.json_path {
                let mut json =
                    serde_json::to_string_pretty(&run.summary).expect("summary serializes");
                json.push('\n');
                write_file(&with_label(p, &case.label), &json)?;
            }
            if let Some(p) = &o.svg_path {
                write_file(
                    &with_label(p, &case.label),
                    &report::svg(&chart_for(&run, &exp)),
                )?;
            }
            let s = &run.summary;
            writeln!(
                out,
                "{name}: stop={} t_stop={:.6e} final_error={} settling_time={} envelope_holds={}",
                s.stop_reason,
                s.t_stop,
                fmt_opt(s.final_error),
                fmt_opt(s.settling_time),
                s.envelope_holds
                    .map_or("n/a".to_string(), |b| b.to_string()),
            )?;
            if !run.trajectory.stop_reason.is_complete() {
                writeln!(err, "{name}: integration stopped early ({})", s.stop_reason)?;
                code = code.max(EXIT_RUNTIME);
            }
        }
        Ok(code)
    })();
    finish(result, err)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            Error::config(
                THREADS_ENV,
                format!("expected a positive integer, got `{v}`"),
            )
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// `ptflow sweep`: runs every case, possibly in parallel, and writes one
/// summary row per case in config order.
pub fn sweep(config: &Path, overrides: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<i32> {
        let cfg = ExperimentConfig::load(config, overrides)?;
        let multi_tp = cfg.flow.as_ref().is_some_and(|f| f.horizons.len() > 1);
        match cfg.init_source {
            Some(InitSource::List) if cfg.inits.is_empty() => {
                return Err(Error::config("init.sweep", "empty sweep"));
            }
            Some(InitSource::Grid) if cfg.inits.is_empty() => {
                return Err(Error::config("init.grid_points", "grid has no points"));
            }
            Some(InitSource::List) | Some(InitSource::Grid) => {}
            _ if multi_tp => {}
            _ => {
                return Err(Error::config(
                    "init.sweep",
                    "sweep needs init.sweep, an init.grid_* block or a list of flow.Tp",
                ))
            }
        }
        let exp = Experiment::new(cfg)?;
        let o = &exp.config().output;
        prepare(&o.csv_path, "output.csv_path")?;
        prepare(&o.json_path, "output.json_path")?;
        if o.svg_path.is_some() {
            writeln!(
                err,
                "note: sweep ignores output.svg_path; use `ptflow run` for per-run plots"
            )?;
        }
        let pool = thread_pool()?;
        let cases = exp.cases();
        let results: Vec<Result<RunOutput>> =
            pool.install(|| cases.par_iter().map(|c| exp.run(c)).collect());
        let mut rows = Vec::with_capacity(results.len());
        let mut code = EXIT_OK;
        for (case, res) in cases.iter().zip(results) {
            let summary = match res {
                Ok(run) => Some(run.summary),
                Err(e) => {
                    writeln!(err, "case {} {:?}: error: {e}", case.index, case.x0)?;
                    None
                }
            };
            let row = SweepRow {
                x0: case.x0.clone(),
                horizon: case.horizon,
                summary,
            };
            if row.status() != "ok" {
                code = EXIT_RUNTIME;
            }
            rows.push(row);
        }
        let table = report::sweep_csv(&rows, multi_tp);
        match &o.csv_path {
            Some(p) => write_file(p, &table)?,
            None => out.write_all(table.as_bytes())?,
        }
        if let Some(p) = &o.json_path {
            let summaries: Vec<_> = rows.iter().map(|r| r.summary.as_ref()).collect();
            let mut json = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
            json.push('\n');
            write_file(p, &json)?;
        }
        let ok = rows.iter().filter(|r| r.status() == "ok").count();
        writeln!(err, "{ok}/{} runs completed", rows.len())?;
        Ok(code)
    })();
    finish(result, err)
}

/// `ptflow verify`: PŁ grid scan or strong-convexity sampling.
pub fn verify(
    config: &Path,
    overrides: &[String],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let result = (|| -> Result<i32> {
        let cfg = ExperimentConfig::load(config, overrides)?;
        let obj = cfg
            .objective
            .as_ref()
            .ok_or_else(|| Error::config("objective.name", "required for verify"))?
            .build()?;
        let v = cfg
            .verify
            .as_ref()
            .ok_or_else(|| Error::config("verify.kind", "required for verify"))?;
        let n = obj.dim();
        let fallback = obj.pl_modulus().and_then(|m| m.domain.clone());
        let lower = v
            .lower
            .clone()
            .or_else(|| fallback.as_ref().map(|d| d.lower().to_vec()))
            .unwrap_or_else(|| vec![-1.0; n]);
        let upper = v
            .upper
            .clone()
            .or_else(|| fallback.as_ref().map(|d| d.upper().to_vec()))
            .unwrap_or_else(|| vec![1.0; n]);
        let domain = BoxDomain::new(lower, upper)
            .map_err(|e| Error::config("verify.lower", e.to_string()))?;
        let axes: Vec<String> = domain
            .lower()
            .iter()
            .zip(domain.upper())
            .map(|(l, u)| format!("[{l}, {u}]"))
            .collect();
        writeln!(out, "objective: {} (n = {n})", obj.name())?;
        writeln!(out, "domain: {}", axes.join(" x "))?;
        match v.kind {
            VerifyKind::Pl => {
                let r = verify_pl(&obj, &domain, v.grid, v.sigma)?;
                writeln!(
                    out,
                    "verifier: pl, grid {} per axis ({} points, {} at the minimum skipped)",
                    v.grid,
                    r.points_checked + r.points_skipped,
                    r.points_skipped
                )?;
                writeln!(
                    out,
                    "sigma_hat: {:.12e} at {:?}",
                    r.sigma_hat,
                    r.argmin.unwrap_or_default()
                )?;
                if let Some(m) = obj.pl_modulus() {
                    writeln!(out, "reported modulus: {}", m.sigma)?;
                }
                match v.sigma {
                    None => Ok(EXIT_OK),
                    Some(s) if r.violations.is_empty() => {
                        writeln!(out, "sigma = {s}: holds on the grid")?;
                        Ok(EXIT_OK)
                    }
                    Some(s) => {
                        writeln!(out, "sigma = {s}: {} violations", r.violations.len())?;
                        for x in r.violations.iter().take(10) {
                            writeln!(out, "  {x:?}")?;
                        }
                        if r.violations.len() > 10 {
                            writeln!(out, "  ...")?;
                        }
                        Ok(EXIT_VIOLATIONS)
                    }
                }
            }
            VerifyKind::Sc => {
                let mu = v.mu.expect("validated");
                let mut rng = ChaCha8Rng::seed_from_u64(v.seed);
                let bad = verify_strong_convexity(&obj, &domain, v.samples, mu, &mut rng)?;
                writeln!(
                    out,
                    "verifier: sc, {} random pairs, seed {}",
                    v.samples, v.seed
                )?;
                if bad.is_empty() {
                    writeln!(out, "mu = {mu}: holds on all pairs")?;
                    return Ok(EXIT_OK);
                }
                writeln!(out, "mu = {mu}: {} violating pairs", bad.len())?;
                for (a, b) in bad.iter().take(10) {
                    writeln!(out, "  {a:?} {b:?}")?;
                }
                if bad.len() > 10 {
                    writeln!(out, "  ...")?;
                }
                Ok(EXIT_VIOLATIONS)
            }
        }
    })();
    finish(result, err)
}

/// `ptflow plot`: line chart of the `x{i}` columns of a trace CSV.
pub fn plot(
    csv: &Path,
    svg_out: &Path,
    tp: Option<f64>,
    title: Option<&str>,
    err: &mut dyn Write,
) -> i32 {
    let result = (|| -> Result<i32> {
        let text = fs::read_to_string(csv)
            .map_err(|e| Error::config("csv", format!("cannot read {}: {e}", csv.display())))?;
        let table = CsvTable::parse(&text)?;
        let default_title = csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut chart = Chart::from_trace(&table, title.unwrap_or(&default_title))?;
        chart.marker = tp.map(|t| (t, "Tp".to_string()));
        prepare(&Some(svg_out.to_path_buf()), "output")?;
        write_file(svg_out, &report::svg(&chart))?;
        Ok(EXIT_OK)
    })();
    finish(result, err)
}
