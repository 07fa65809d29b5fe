//! CSV traces, sweep tables and static SVG line charts.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiment::RunSummary;
use crate::integrator::Trajectory;

/// `{:.16e}` keeps 17 significant digits, enough to round-trip an `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Trace with header `t,x0,...,x{n-1},f,grad_norm,V,envelope`. Without an
/// attached envelope the last column is `nan`.
pub fn trace_csv(traj: &Trajectory) -> String {
    let n = traj.dim();
    let mut out = String::from("t");
    for i in 0..n {
        write!(out, ",x{i}").unwrap();
    }
    out.push_str(",f,grad_norm,V,envelope\n");
    for i in 0..traj.len() {
        out.push_str(&num(traj.times[i]));
        for x in &traj.states[i] {
            out.push(',');
            out.push_str(&num(*x));
        }
        let env = traj.envelope_vals.get(i).copied().unwrap_or(f64::NAN);
        for v in [traj.f_vals[i], traj.grad_norms[i], traj.lyap_vals[i], env] {
            out.push(',');
            out.push_str(&num(v));
        }
        out.push('\n');
    }
    out
}

/// Row of a sweep table. `summary` is `None` when the run errored.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub x0: Vec<f64>,
    pub horizon: Option<f64>,
    pub summary: Option<RunSummary>,
}

impl SweepRow {
    /// `ok`, the stop reason of an incomplete run, or `failed`.
    pub fn status(&self) -> &'static str {
        match &self.summary {
            None => "failed",
            Some(s) if s.stop_reason == "reached_t_stop" || s.stop_reason == "equilibrium" => "ok",
            Some(s) => s.stop_reason,
        }
    }
}

/// `x0,...,x{n-1},[Tp,]settling_time,final_error,envelope_holds,status`;
/// missing values are left empty.
pub fn sweep_csv(rows: &[SweepRow], with_horizon: bool) -> String {
    let n = rows.first().map_or(0, |r| r.x0.len());
    let mut out = String::new();
    for i in 0..n {
        write!(out, "x{i},").unwrap();
    }
    if with_horizon {
        out.push_str("Tp,");
    }
    out.push_str("settling_time,final_error,envelope_holds,status\n");
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for row in rows {
        for x in &row.x0 {
            write!(out, "{},", num(*x)).unwrap();
        }
        if with_horizon {
            write!(out, "{},", opt(row.horizon)).unwrap();
        }
        let s = row.summary.as_ref();
        let holds = s
            .and_then(|s| s.envelope_holds)
            .map(|b| b.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            opt(s.and_then(|s| s.settling_time)),
            opt(s.and_then(|s| s.final_error)),
            holds,
            row.status()
        )
        .unwrap();
    }
    out
}

/// Columns of a trace CSV, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::config("csv", "empty file"))?;
        let headers: Vec<String> = header.split(',').map(|h| h.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != headers.len() {
                return Err(Error::config(
                    "csv",
                    format!(
                        "row {} has {} cells, header has {}",
                        row + 1,
                        cells.len(),
                        headers.len()
                    ),
                ));
            }
            for (col, cell) in columns.iter_mut().zip(cells) {
                let v = cell.trim().parse::<f64>().map_err(|_| {
                    Error::config("csv", format!("row {}: `{cell}` is not a number", row + 1))
                })?;
                col.push(v);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Line chart description. Series are drawn solid, dashed, dotted, then
/// dash-dotted, cycling.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical marker, e.g. at `t0 + Tp`.
    pub marker: Option<(f64, String)>,
    /// Key-value lines written into `<desc>`.
    pub notes: Vec<(String, String)>,
}

impl Chart {
    /// One series per `x{i}` column of a trace table against `t`.
    pub fn from_trace(table: &CsvTable, title: impl Into<String>) -> Result<Self> {
        let t = table
            .column("t")
            .ok_or_else(|| Error::config("csv", "missing `t` column"))?
            .to_vec();
        let series: Vec<Series> = table
            .headers
            .iter()
            .zip(&table.columns)
            .filter(|(h, _)| {
                h.len() > 1 && h.starts_with('x') && h[1..].bytes().all(|b| b.is_ascii_digit())
            })
            .map(|(h, col)| Series {
                label: format!("x{}", h[1..].parse::<usize>().unwrap_or(0) + 1),
                xs: t.clone(),
                ys: col.clone(),
            })
            .collect();
        if series.is_empty() {
            return Err(Error::config("csv", "no state columns x0, x1, ..."));
        }
        Ok(Self {
            title: title.into(),
            x_label: "t".into(),
            y_label: "x(t)".into(),
            series,
            ..Self::default()
        })
    }

    /// One series per state coordinate.
    pub fn from_trajectory(traj: &Trajectory, title: impl Into<String>) -> Self {
        let series = (0..traj.dim())
            .map(|i| Series {
                label: format!("x{}", i + 1),
                xs: traj.times.clone(),
                ys: traj.states.iter().map(|x| x[i]).collect(),
            })
            .collect();
        Self {
            title: title.into(),
            x_label: "t".into(),
            y_label: "x(t)".into(),
            series,
            ..Self::default()
        }
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f4e9c", "#b2182b", "#1b7837", "#762a83", "#e08214", "#4d4d4d",
];
const DASHES: [&str; 4] = ["", "8 5", "2 4", "10 4 2 4"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick positions covering `[lo, hi]` at a 1-2-5 step.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|i| i as f64 * step).collect(), decimals)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        let pad = 0.5 * hi.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Self-contained SVG with auto-scaled axes.
pub fn svg(chart: &Chart) -> String {
    let (x_lo, x_hi) = range(
        chart
            .series
            .iter()
            .flat_map(|s| s.xs.iter().copied())
            .chain(chart.marker.as_ref().map(|m| m.0)),
    );
    let (y_lo, y_hi) = range(chart.series.iter().flat_map(|s| s.ys.iter().copied()));
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", escape(&chart.title)).unwrap();
    if !chart.notes.is_empty() {
        out.push_str("<desc>\n");
        for (k, v) in &chart.notes {
            writeln!(out, "{} = {}", escape(k), escape(v)).unwrap();
        }
        out.push_str("</desc>\n");
    }
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&chart.title)
    )
    .unwrap();

    let (xt, xd) = ticks(x_lo, x_hi);
    for x in xt {
        let px = sx(x);
        writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e5e5e5"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x:.xd$}</text>"##,
            TOP + ph,
            TOP + ph + 16.0
        )
        .unwrap();
    }
    let (yt, yd) = ticks(y_lo, y_hi);
    for y in yt {
        let py = sy(y);
        writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y:.yd$}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&chart.x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    )
    .unwrap();

    if let Some((t, label)) = &chart.marker {
        let px = sx(*t);
        writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#666666" stroke-width="1.5" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}" text-anchor="end" fill="#666666">{}</text>"##,
            TOP + ph,
            px - 4.0,
            TOP + 14.0,
            escape(label)
        )
        .unwrap();
    }

    for (i, s) in chart.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = DASHES[i % DASHES.len()];
        let points: Vec<String> =
            s.xs.iter()
                .zip(&s.ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash_attr} points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let lx = LEFT + pw - 80.0;
        writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.8"{dash_attr}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 30.0,
            lx + 36.0,
            ly + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
