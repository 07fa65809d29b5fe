//! Declarative experiments: a validated view of a [`ConfigMap`] and the
//! runner that turns it into sampled trajectories and [`RunSummary`]s.
//!
//! A config expands into one [`Case`] per (Tp, initial condition) pair, where
//! `flow.Tp` may be a list and the initial conditions come from `init.x0`,
//! `init.sweep` or an `init.grid_*` block.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ConfigMap, Value};
use crate::diagnostics::{self, EnvelopeSpec};
use crate::error::{Error, Result};
use crate::flows::FlowSpec;
use crate::integrator::{self, IntegratorConfig, Method, Mode, Trajectory};
use crate::objectives::{distance, Objective};
use crate::timescale::TimeScaleParams;

/// Every key a config may contain.
pub const KNOWN_KEYS: &[&str] = &[
    "objective.name",
    "objective.dim",
    "objective.A",
    "objective.b",
    "flow.name",
    "flow.c",
    "flow.q",
    "flow.k",
    "flow.rho0",
    "flow.Tp",
    "flow.r",
    "flow.t0",
    "init.x0",
    "init.sweep",
    "init.grid_lower",
    "init.grid_step",
    "init.grid_points",
    "integrator.method",
    "integrator.rel_tol",
    "integrator.abs_tol",
    "integrator.initial_step",
    "integrator.max_steps",
    "integrator.delta_rel",
    "integrator.mode",
    "integrator.horizon",
    "diagnostics.envelope",
    "diagnostics.sigma",
    "diagnostics.mu",
    "diagnostics.settling_eps",
    "output.csv_path",
    "output.svg_path",
    "output.json_path",
    "output.sample_count",
    "output.record_wall_time",
    "verify.kind",
    "verify.sigma",
    "verify.mu",
    "verify.lower",
    "verify.upper",
    "verify.grid",
    "verify.samples",
    "verify.seed",
];

pub const DEFAULT_SETTLING_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveConfig {
    Trid { dim: usize },
    Rosenbrock { dim: usize },
    Quadratic { a: Vec<Vec<f64>>, b: Vec<f64> },
}

impl ObjectiveConfig {
    pub fn dim(&self) -> usize {
        match self {
            Self::Trid { dim } | Self::Rosenbrock { dim } => *dim,
            Self::Quadratic { b, .. } => b.len(),
        }
    }

    pub fn build(&self) -> Result<Objective> {
        let built = match self {
            Self::Trid { dim } => Objective::trid(*dim),
            Self::Rosenbrock { dim } => Objective::rosenbrock(*dim),
            Self::Quadratic { a, b } => Objective::quadratic(a, b),
        };
        built.map_err(|e| match e {
            Error::InvalidParameter {
                name: "dim",
                reason,
            } => Error::config("objective.dim", reason),
            Error::InvalidParameter { reason, .. } => Error::config("objective.A", reason),
            Error::NotPositiveDefinite => {
                Error::config("objective.A", "matrix is not positive definite")
            }
            Error::DimensionMismatch { expected, got } => Error::config(
                "objective.A",
                format!("expected {expected} entries to match objective.b, got {got}"),
            ),
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Gf,
    Qrgf,
    Qsgf,
    Ptgf,
    Ptreg,
}

impl FlowKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gf" => Self::Gf,
            "qrgf" => Self::Qrgf,
            "qsgf" => Self::Qsgf,
            "ptgf" => Self::Ptgf,
            "ptreg" => Self::Ptreg,
            _ => return None,
        })
    }

    fn time_scaled(self) -> bool {
        matches!(self, Self::Ptgf | Self::Ptreg)
    }
}

#[derive(Debug, Clone, PartialEq)]
/// Keys that belong to other flow kinds are ignored; `flow.Tp` doubles as
/// the horizon of time-invariant flows.
pub struct FlowConfig {
    pub kind: FlowKind,
    pub c: f64,
    pub q: Option<f64>,
    pub k: f64,
    pub rho0: f64,
    /// One entry per run; empty only for time-invariant flows with an
    /// explicit `integrator.horizon`.
    pub horizons: Vec<f64>,
    pub r: u32,
    pub t0: f64,
}

impl FlowConfig {
    /// The flow for one value of `Tp` (ignored by time-invariant flows).
    pub fn build(&self, tp: Option<f64>) -> Result<FlowSpec> {
        let ts = || -> Result<TimeScaleParams> {
            let tp =
                tp.ok_or_else(|| Error::config("flow.Tp", "required for time-scaled flows"))?;
            TimeScaleParams::new(self.t0, tp, self.r)
        };
        let built = match self.kind {
            FlowKind::Gf => FlowSpec::vanilla(self.c),
            FlowKind::Qrgf => FlowSpec::q_rescaled(self.c, self.q.unwrap_or(f64::NAN)),
            FlowKind::Qsgf => FlowSpec::q_signed(self.c, self.q.unwrap_or(f64::NAN)),
            FlowKind::Ptgf => FlowSpec::prescribed_time(self.k, ts()?),
            FlowKind::Ptreg => FlowSpec::regulator(self.rho0, ts()?),
        };
        built.map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                Error::config(format!("flow.{name}"), reason)
            }
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeChoice {
    /// PŁ envelope for `ptgf` when the objective carries a modulus,
    /// regulator envelope for `ptreg`, nothing otherwise.
    Auto,
    None,
    Pl,
    Sc,
    Regulator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub envelope: EnvelopeChoice,
    pub sigma: Option<f64>,
    pub mu: Option<f64>,
    pub settling_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    pub csv_path: Option<PathBuf>,
    pub svg_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyKind {
    Pl,
    Sc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub kind: VerifyKind,
    pub sigma: Option<f64>,
    pub mu: Option<f64>,
    /// Box bounds; `None` falls back to the objective's PŁ domain or
    /// `[-1, 1]^n`.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub grid: usize,
    pub samples: usize,
    pub seed: u64,
}

/// How the initial conditions were given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSource {
    Single,
    List,
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: Option<ObjectiveConfig>,
    pub flow: Option<FlowConfig>,
    pub inits: Vec<Vec<f64>>,
    pub init_source: Option<InitSource>,
    pub integrator: IntegratorConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
    pub verify: Option<VerifyConfig>,
}

fn positive_key(map: &ConfigMap, key: &str) -> Result<Option<f64>> {
    match map.number(key)? {
        Some(v) if !(v > 0.0 && v.is_finite()) => {
            Err(Error::config(key, format!("must be > 0, got {v}")))
        }
        other => Ok(other),
    }
}

fn bounds(map: &ConfigMap, key: &str, dim: Option<usize>) -> Result<Option<Vec<f64>>> {
    match map.get(key) {
        None => Ok(None),
        Some(Value::Number(x)) => match dim {
            Some(n) => Ok(Some(vec![*x; n])),
            None => Err(Error::config(key, "scalar bound needs a known dimension")),
        },
        Some(_) => {
            let v = map.vector(key)?.unwrap_or_default();
            if let Some(n) = dim {
                if v.len() != n {
                    return Err(Error::config(
                        key,
                        format!("expected {n} entries, got {}", v.len()),
                    ));
                }
            }
            Ok(Some(v))
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut map = ConfigMap::load(path)?;
        for o in overrides {
            map.set(o)?;
        }
        Self::from_map(&map)
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        if let Some(key) = map.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::config(key, "unknown key"));
        }
        let objective = Self::parse_objective(map)?;
        let flow = Self::parse_flow(map)?;
        let dim = match (&objective, &flow) {
            (_, Some(f)) if f.kind == FlowKind::Ptreg => Some(1),
            (Some(o), _) => Some(o.dim()),
            _ => None,
        };
        let (inits, init_source) = Self::parse_inits(map, dim)?;
        let integrator = Self::parse_integrator(map)?;
        if let Some(f) = &flow {
            if !f.kind.time_scaled() && f.horizons.is_empty() && integrator.horizon.is_none() {
                return Err(Error::config(
                    "integrator.horizon",
                    format!(
                        "flow `{}` needs integrator.horizon or flow.Tp",
                        map.text("flow.name")?.unwrap_or_default()
                    ),
                ));
            }
        }
        let diagnostics = Self::parse_diagnostics(map)?;
        let output = OutputConfig {
            csv_path: map.text("output.csv_path")?.map(PathBuf::from),
            svg_path: map.text("output.svg_path")?.map(PathBuf::from),
            json_path: map.text("output.json_path")?.map(PathBuf::from),
            record_wall_time: map.boolean("output.record_wall_time")?.unwrap_or(false),
        };
        let verify = Self::parse_verify(map, dim)?;
        Ok(Self {
            objective,
            flow,
            inits,
            init_source,
            integrator,
            diagnostics,
            output,
            verify,
        })
    }

    fn parse_objective(map: &ConfigMap) -> Result<Option<ObjectiveConfig>> {
        let Some(name) = map.text("objective.name")? else {
            for key in ["objective.dim", "objective.A", "objective.b"] {
                if map.contains(key) {
                    return Err(Error::config(key, "set without objective.name"));
                }
            }
            return Ok(None);
        };
        let dim = map
            .integer("objective.dim")?
            .map(|d| usize::try_from(d).map_err(|_| Error::config("objective.dim", "too large")))
            .transpose()?;
        let cfg = match name.as_str() {
            "none" => return Ok(None),
            "trid" | "rosenbrock" => {
                for key in ["objective.A", "objective.b"] {
                    if map.contains(key) {
                        return Err(Error::config(
                            key,
                            format!("not used by objective `{name}`"),
                        ));
                    }
                }
                let dim = dim.ok_or_else(|| Error::config("objective.dim", "required"))?;
                if name == "trid" {
                    ObjectiveConfig::Trid { dim }
                } else {
                    ObjectiveConfig::Rosenbrock { dim }
                }
            }
            "quadratic" => {
                let a = map
                    .matrix("objective.A")?
                    .ok_or_else(|| Error::config("objective.A", "required for the quadratic"))?;
                let b = match map.vector("objective.b")? {
                    Some(b) => b,
                    None => vec![0.0; a.len()],
                };
                if let Some(d) = dim {
                    if d != b.len() {
                        return Err(Error::config(
                            "objective.dim",
                            format!("is {d} but objective.b has {} entries", b.len()),
                        ));
                    }
                }
                ObjectiveConfig::Quadratic { a, b }
            }
            other => {
                return Err(Error::config(
                    "objective.name",
                    format!(
                    "unknown objective `{other}` (expected trid, rosenbrock, quadratic or none)"
                ),
                ))
            }
        };
        cfg.build()?;
        Ok(Some(cfg))
    }

    fn parse_flow(map: &ConfigMap) -> Result<Option<FlowConfig>> {
        let Some(name) = map.text("flow.name")? else {
            if let Some(key) = map.keys().find(|k| k.starts_with("flow.")) {
                return Err(Error::config(key, "set without flow.name"));
            }
            return Ok(None);
        };
        let kind = FlowKind::parse(&name).ok_or_else(|| {
            Error::config(
                "flow.name",
                format!("unknown flow `{name}` (expected gf, qrgf, qsgf, ptgf or ptreg)"),
            )
        })?;
        let horizons = match map.get("flow.Tp") {
            None => Vec::new(),
            Some(Value::Number(tp)) => vec![*tp],
            Some(_) => {
                let v = map.vector("flow.Tp")?.unwrap_or_default();
                if v.is_empty() {
                    return Err(Error::config("flow.Tp", "empty list"));
                }
                v
            }
        };
        if kind.time_scaled() && horizons.is_empty() {
            return Err(Error::config(
                "flow.Tp",
                format!("required for flow `{name}`"),
            ));
        }
        let r = map.integer("flow.r")?.unwrap_or(1);
        let r = u32::try_from(r).map_err(|_| Error::config("flow.r", "too large"))?;
        let q = map.number("flow.q")?;
        if matches!(kind, FlowKind::Qrgf | FlowKind::Qsgf) && q.is_none() {
            return Err(Error::config(
                "flow.q",
                format!("required for flow `{name}`"),
            ));
        }
        let cfg = FlowConfig {
            kind,
            c: map.number("flow.c")?.unwrap_or(1.0),
            q,
            k: map.number("flow.k")?.unwrap_or(1.0),
            rho0: map.number("flow.rho0")?.unwrap_or(1.0),
            horizons,
            r,
            t0: map.number("flow.t0")?.unwrap_or(0.0),
        };
        if cfg.horizons.is_empty() {
            cfg.build(None)?;
        }
        for &tp in &cfg.horizons {
            if !(tp > 0.0 && tp.is_finite()) {
                return Err(Error::config("flow.Tp", format!("must be > 0, got {tp}")));
            }
            cfg.build(Some(tp))?;
        }
        Ok(Some(cfg))
    }

    fn parse_inits(
        map: &ConfigMap,
        dim: Option<usize>,
    ) -> Result<(Vec<Vec<f64>>, Option<InitSource>)> {
        let grid_keys = ["init.grid_lower", "init.grid_step", "init.grid_points"];
        let has_grid = grid_keys.iter().any(|k| map.contains(k));
        let given: Vec<&str> = ["init.x0", "init.sweep"]
            .into_iter()
            .filter(|k| map.contains(k))
            .chain(has_grid.then_some("init.grid_lower"))
            .collect();
        if given.len() > 1 {
            return Err(Error::config(
                given[1],
                format!("conflicts with {}", given[0]),
            ));
        }
        let check = |key: &str, x: &[f64]| -> Result<()> {
            if let Some(n) = dim {
                if x.len() != n {
                    return Err(Error::config(
                        key,
                        format!("expected {n} entries, got {}", x.len()),
                    ));
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(key, "entries must be finite"));
            }
            Ok(())
        };
        if let Some(x0) = map.vector("init.x0")? {
            check("init.x0", &x0)?;
            return Ok((vec![x0], Some(InitSource::Single)));
        }
        if let Some(list) = map.matrix("init.sweep")? {
            for x in &list {
                check("init.sweep", x)?;
            }
            return Ok((list, Some(InitSource::List)));
        }
        if has_grid {
            let missing = grid_keys.iter().find(|k| !map.contains(k));
            if let Some(key) = missing {
                return Err(Error::config(
                    *key,
                    "grid initial conditions need lower, step and points",
                ));
            }
            let points = map.integer("init.grid_points")?.unwrap_or(0) as usize;
            let n = dim
                .ok_or_else(|| Error::config("init.grid_lower", "grid needs a known dimension"))?;
            let lower = bounds(map, "init.grid_lower", Some(n))?.unwrap_or_default();
            let step = bounds(map, "init.grid_step", Some(n))?.unwrap_or_default();
            let minimizer = match map.text("flow.name")?.as_deref() {
                Some("ptreg") => Some(vec![0.0]),
                _ => Self::parse_objective(map)?
                    .map(|o| o.build())
                    .transpose()?
                    .and_then(|o| o.minimizer().map(<[f64]>::to_vec)),
            };
            return Ok((
                grid_points(&lower, &step, points, minimizer.as_deref()),
                Some(InitSource::Grid),
            ));
        }
        Ok((Vec::new(), None))
    }

    fn parse_integrator(map: &ConfigMap) -> Result<IntegratorConfig> {
        let mut cfg = IntegratorConfig::default();
        if let Some(m) = map.text("integrator.method")? {
            cfg.method = match m.as_str() {
                "rk45" => Method::Rk45,
                "rk4" => Method::Rk4,
                other => {
                    return Err(Error::config(
                        "integrator.method",
                        format!("unknown method `{other}` (rk45 or rk4)"),
                    ))
                }
            };
        }
        if let Some(m) = map.text("integrator.mode")? {
            cfg.mode = match m.as_str() {
                "auto" => Mode::Auto,
                "raw" => Mode::RawTime,
                "stretched" => Mode::StretchedTime,
                other => {
                    return Err(Error::config(
                        "integrator.mode",
                        format!("unknown mode `{other}` (auto, raw or stretched)"),
                    ))
                }
            };
        }
        cfg.rel_tol = map.number("integrator.rel_tol")?.unwrap_or(cfg.rel_tol);
        cfg.abs_tol = map.number("integrator.abs_tol")?.unwrap_or(cfg.abs_tol);
        cfg.initial_step = map.number("integrator.initial_step")?.or(cfg.initial_step);
        if let Some(n) = map.integer("integrator.max_steps")? {
            cfg.max_steps = usize::try_from(n)
                .map_err(|_| Error::config("integrator.max_steps", "too large"))?;
        }
        cfg.delta_rel = map.number("integrator.delta_rel")?.unwrap_or(cfg.delta_rel);
        cfg.horizon = map.number("integrator.horizon")?.or(cfg.horizon);
        if let Some(n) = map.integer("output.sample_count")? {
            cfg.sample_count = usize::try_from(n)
                .map_err(|_| Error::config("output.sample_count", "too large"))?;
        }
        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter {
                name: "sample_count",
                reason,
            } => Error::config("output.sample_count", reason),
            Error::InvalidParameter { name, reason } => {
                Error::config(format!("integrator.{name}"), reason)
            }
            other => other,
        })?;
        Ok(cfg)
    }

    fn parse_diagnostics(map: &ConfigMap) -> Result<DiagnosticsConfig> {
        let envelope = match map.text("diagnostics.envelope")?.as_deref() {
            None | Some("auto") => EnvelopeChoice::Auto,
            Some("none") => EnvelopeChoice::None,
            Some("pl") => EnvelopeChoice::Pl,
            Some("sc") => EnvelopeChoice::Sc,
            Some("regulator") => EnvelopeChoice::Regulator,
            Some(other) => {
                return Err(Error::config(
                    "diagnostics.envelope",
                    format!("unknown envelope `{other}` (auto, none, pl, sc or regulator)"),
                ))
            }
        };
        Ok(DiagnosticsConfig {
            envelope,
            sigma: positive_key(map, "diagnostics.sigma")?,
            mu: positive_key(map, "diagnostics.mu")?,
            settling_eps: positive_key(map, "diagnostics.settling_eps")?
                .unwrap_or(DEFAULT_SETTLING_EPS),
        })
    }

    fn parse_verify(map: &ConfigMap, dim: Option<usize>) -> Result<Option<VerifyConfig>> {
        let Some(kind) = map.text("verify.kind")? else {
            if let Some(key) = map.keys().find(|k| k.starts_with("verify.")) {
                return Err(Error::config(key, "set without verify.kind"));
            }
            return Ok(None);
        };
        let kind = match kind.as_str() {
            "pl" => VerifyKind::Pl,
            "sc" => VerifyKind::Sc,
            other => {
                return Err(Error::config(
                    "verify.kind",
                    format!("unknown verifier `{other}` (pl or sc)"),
                ))
            }
        };
        let mu = positive_key(map, "verify.mu")?;
        if kind == VerifyKind::Sc && mu.is_none() {
            return Err(Error::config("verify.mu", "required for the sc verifier"));
        }
        let grid = map.integer("verify.grid")?.unwrap_or(51) as usize;
        if grid < 2 {
            return Err(Error::config("verify.grid", "must be >= 2"));
        }
        let samples = map.integer("verify.samples")?.unwrap_or(1000) as usize;
        if samples == 0 {
            return Err(Error::config("verify.samples", "must be >= 1"));
        }
        Ok(Some(VerifyConfig {
            kind,
            sigma: positive_key(map, "verify.sigma")?,
            mu,
            lower: bounds(map, "verify.lower", dim)?,
            upper: bounds(map, "verify.upper", dim)?,
            grid,
            samples,
            seed: map.integer("verify.seed")?.unwrap_or(0),
        }))
    }

    /// Expands the config into runs: every `Tp` in `flow.Tp` crossed with
    /// every initial condition, `Tp`-major.
    pub fn cases(&self) -> Result<Vec<Case>> {
        let flow = self
            .flow
            .as_ref()
            .ok_or_else(|| Error::config("flow.name", "required"))?;
        if self.init_source.is_none() {
            return Err(Error::config(
                "init.x0",
                "required (or init.sweep / init.grid_*)",
            ));
        }
        let horizons: Vec<Option<f64>> = if flow.horizons.is_empty() {
            vec![None]
        } else {
            flow.horizons.iter().copied().map(Some).collect()
        };
        let multi_tp = horizons.len() > 1;
        let multi_init = self.inits.len() > 1;
        let mut out = Vec::new();
        for &tp in &horizons {
            for (i, x0) in self.inits.iter().enumerate() {
                let mut parts = Vec::new();
                if multi_tp {
                    parts.push(format!("Tp{}", tp.unwrap_or_default()));
                }
                if multi_init {
                    parts.push(format!("ic{i}"));
                }
                out.push(Case {
                    index: out.len(),
                    horizon: tp,
                    x0: x0.clone(),
                    label: parts.join("_"),
                });
            }
        }
        Ok(out)
    }

    /// Resolved settings, defaults included, as recorded in outputs.
    pub fn settings(&self) -> BTreeMap<String, String> {
        let mut s = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            s.insert(k.to_string(), v);
        };
        match &self.objective {
            Some(ObjectiveConfig::Trid { dim }) => {
                put("objective.name", "trid".into());
                put("objective.dim", dim.to_string());
            }
            Some(ObjectiveConfig::Rosenbrock { dim }) => {
                put("objective.name", "rosenbrock".into());
                put("objective.dim", dim.to_string());
            }
            Some(ObjectiveConfig::Quadratic { a, b }) => {
                put("objective.name", "quadratic".into());
                put("objective.A", format!("{a:?}"));
                put("objective.b", format!("{b:?}"));
            }
            None => put("objective.name", "none".into()),
        }
        if let Some(f) = &self.flow {
            let name = match f.kind {
                FlowKind::Gf => "gf",
                FlowKind::Qrgf => "qrgf",
                FlowKind::Qsgf => "qsgf",
                FlowKind::Ptgf => "ptgf",
                FlowKind::Ptreg => "ptreg",
            };
            put("flow.name", name.into());
            match f.kind {
                FlowKind::Gf => put("flow.c", f.c.to_string()),
                FlowKind::Qrgf | FlowKind::Qsgf => {
                    put("flow.c", f.c.to_string());
                    put("flow.q", f.q.unwrap_or(f64::NAN).to_string());
                }
                FlowKind::Ptgf | FlowKind::Ptreg => {
                    if f.kind == FlowKind::Ptgf {
                        put("flow.k", f.k.to_string());
                    } else {
                        put("flow.rho0", f.rho0.to_string());
                    }
                    put("flow.r", f.r.to_string());
                    put("flow.t0", f.t0.to_string());
                }
            }
            if !f.horizons.is_empty() {
                put("flow.Tp", format!("{:?}", f.horizons));
            }
        }
        let ic = &self.integrator;
        put(
            "integrator.method",
            match ic.method {
                Method::Rk45 => "rk45",
                Method::Rk4 => "rk4",
            }
            .into(),
        );
        put("integrator.mode", mode_name(ic.mode).into());
        put("integrator.rel_tol", ic.rel_tol.to_string());
        put("integrator.abs_tol", ic.abs_tol.to_string());
        put("integrator.max_steps", ic.max_steps.to_string());
        put("integrator.delta_rel", ic.delta_rel.to_string());
        if let Some(h) = ic.initial_step {
            put("integrator.initial_step", h.to_string());
        }
        if let Some(h) = ic.horizon {
            put("integrator.horizon", h.to_string());
        }
        put("output.sample_count", ic.sample_count.to_string());
        let d = &self.diagnostics;
        put(
            "diagnostics.envelope",
            match d.envelope {
                EnvelopeChoice::Auto => "auto",
                EnvelopeChoice::None => "none",
                EnvelopeChoice::Pl => "pl",
                EnvelopeChoice::Sc => "sc",
                EnvelopeChoice::Regulator => "regulator",
            }
            .into(),
        );
        if let Some(v) = d.sigma {
            put("diagnostics.sigma", v.to_string());
        }
        if let Some(v) = d.mu {
            put("diagnostics.mu", v.to_string());
        }
        put("diagnostics.settling_eps", d.settling_eps.to_string());
        s
    }
}

/// Row-major grid `lower + i * step` with `points` values per axis, minus
/// any point equal to `exclude`.
fn grid_points(
    lower: &[f64],
    step: &[f64],
    points: usize,
    exclude: Option<&[f64]>,
) -> Vec<Vec<f64>> {
    let n = lower.len();
    let total = points.checked_pow(n as u32).unwrap_or(0);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let x: Vec<f64> = (0..n).map(|d| lower[d] + idx[d] as f64 * step[d]).collect();
        if exclude != Some(x.as_slice()) {
            out.push(x);
        }
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < points {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

pub(crate) fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Auto => "auto",
        Mode::RawTime => "raw",
        Mode::StretchedTime => "stretched",
    }
}

/// One run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    /// Position in config order.
    pub index: usize,
    pub horizon: Option<f64>,
    pub x0: Vec<f64>,
    /// File-name suffix; empty for a single run.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub objective: String,
    pub flow: &'static str,
    #[serde(rename = "Tp")]
    pub horizon: Option<f64>,
    pub x0: Vec<f64>,
    pub final_state: Vec<f64>,
    pub final_f: f64,
    /// Distance of the final state to the known minimizer.
    pub final_error: Option<f64>,
    pub settling_time: Option<f64>,
    pub settling_eps: f64,
    pub envelope: Option<&'static str>,
    pub envelope_holds: Option<bool>,
    pub max_violation: Option<f64>,
    pub stop_reason: &'static str,
    pub mode: &'static str,
    pub t_stop: f64,
    pub steps: usize,
    /// Seconds; recorded only with `output.record_wall_time = true` so that
    /// summaries stay reproducible.
    pub wall_time: Option<f64>,
    pub settings: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub case: Case,
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

/// A validated config with its objective built, ready to run cases.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    objective: Option<Objective>,
    settings: BTreeMap<String, String>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let flow = config
            .flow
            .as_ref()
            .ok_or_else(|| Error::config("flow.name", "required"))?;
        let objective = match (&config.objective, flow.kind) {
            (Some(_), FlowKind::Ptreg) => {
                return Err(Error::config(
                    "objective.name",
                    "the regulator takes no objective (use `none`)",
                ))
            }
            (None, FlowKind::Ptreg) => None,
            (None, _) => {
                return Err(Error::config(
                    "objective.name",
                    "required for gradient flows",
                ))
            }
            (Some(o), _) => Some(o.build()?),
        };
        let exp = Self {
            settings: config.settings(),
            config,
            objective,
        };
        for case in exp.config.cases()? {
            let spec = exp.flow_for(&case)?;
            exp.envelope_for(&spec)?;
        }
        Ok(exp)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn objective(&self) -> Option<&Objective> {
        self.objective.as_ref()
    }

    pub fn cases(&self) -> Vec<Case> {
        self.config.cases().expect("validated in Experiment::new")
    }

    pub fn flow_for(&self, case: &Case) -> Result<FlowSpec> {
        self.config
            .flow
            .as_ref()
            .expect("validated")
            .build(case.horizon)
    }

    fn integrator_for(&self, case: &Case, spec: &FlowSpec) -> IntegratorConfig {
        let mut cfg = self.config.integrator.clone();
        if spec.time_scale().is_none() && cfg.horizon.is_none() {
            cfg.horizon = case.horizon;
        }
        cfg
    }

    /// Envelope implied by `diagnostics.*` for this flow.
    pub fn envelope_for(&self, spec: &FlowSpec) -> Result<Option<EnvelopeSpec>> {
        let d = &self.config.diagnostics;
        let obj = self.objective.as_ref();
        let ptgf = match spec {
            FlowSpec::PrescribedTime { gain, ts } => gain.constant().map(|k| (k, *ts)),
            _ => None,
        };
        let wrap = |e: Error, key: &str| match e {
            Error::InvalidParameter { reason, .. } => Error::config(key, reason),
            other => other,
        };
        match d.envelope {
            EnvelopeChoice::None => Ok(None),
            EnvelopeChoice::Auto => match (spec, ptgf) {
                (FlowSpec::Regulator { rho0, ts }, _) => {
                    Ok(Some(EnvelopeSpec::regulator(*rho0, *ts)?))
                }
                (_, Some((k, ts))) => {
                    if let Some(sigma) = d
                        .sigma
                        .or_else(|| obj.and_then(|o| o.pl_modulus()).map(|m| m.sigma))
                    {
                        Ok(Some(
                            EnvelopeSpec::pl(sigma, k, ts)
                                .map_err(|e| wrap(e, "diagnostics.sigma"))?,
                        ))
                    } else if let Some(mu) = d.mu {
                        Ok(Some(
                            EnvelopeSpec::strongly_convex(mu, k, ts)
                                .map_err(|e| wrap(e, "diagnostics.mu"))?,
                        ))
                    } else {
                        Ok(None)
                    }
                }
                _ => Ok(None),
            },
            EnvelopeChoice::Pl | EnvelopeChoice::Sc => {
                let (k, ts) = ptgf.ok_or_else(|| {
                    Error::config(
                        "diagnostics.envelope",
                        format!("needs flow ptgf, got `{}`", spec.name()),
                    )
                })?;
                if d.envelope == EnvelopeChoice::Pl {
                    let sigma = d
                        .sigma
                        .or_else(|| obj.and_then(|o| o.pl_modulus()).map(|m| m.sigma))
                        .ok_or_else(|| {
                            Error::config(
                                "diagnostics.sigma",
                                "required: the objective has no PŁ modulus",
                            )
                        })?;
                    Ok(Some(
                        EnvelopeSpec::pl(sigma, k, ts).map_err(|e| wrap(e, "diagnostics.sigma"))?,
                    ))
                } else {
                    let mu =
                        d.mu.or_else(|| obj.and_then(|o| o.sc_modulus()))
                            .ok_or_else(|| {
                                Error::config(
                                    "diagnostics.mu",
                                    "required: the objective has no strong-convexity modulus",
                                )
                            })?;
                    Ok(Some(
                        EnvelopeSpec::strongly_convex(mu, k, ts)
                            .map_err(|e| wrap(e, "diagnostics.mu"))?,
                    ))
                }
            }
            EnvelopeChoice::Regulator => match spec {
                FlowSpec::Regulator { rho0, ts } => Ok(Some(EnvelopeSpec::regulator(*rho0, *ts)?)),
                _ => Err(Error::config(
                    "diagnostics.envelope",
                    format!("needs flow ptreg, got `{}`", spec.name()),
                )),
            },
        }
    }

    /// Integrates one case and fills in its summary.
    pub fn run(&self, case: &Case) -> Result<RunOutput> {
        let spec = self.flow_for(case)?;
        let envelope = self.envelope_for(&spec)?;
        let cfg = self.integrator_for(case, &spec);
        let obj = self.objective.as_ref();
        let started = Instant::now();
        let mut traj = integrator::integrate(&spec, obj, &case.x0, &cfg)?;
        let wall_time = self
            .config
            .output
            .record_wall_time
            .then(|| started.elapsed().as_secs_f64());
        let report = envelope
            .as_ref()
            .map(|env| diagnostics::annotate(&mut traj, obj, env))
            .transpose()?;
        let x_star: Option<Vec<f64>> = match obj {
            None => Some(vec![0.0]),
            Some(o) => o.minimizer().map(<[f64]>::to_vec),
        };
        let eps = self.config.diagnostics.settling_eps;
        let final_state = traj.final_state().to_vec();
        let mut settings = self.settings.clone();
        if let Some(tp) = case.horizon {
            settings.insert("flow.Tp".into(), tp.to_string());
        }
        settings.insert("init.x0".into(), format!("{:?}", case.x0));
        let summary = RunSummary {
            objective: obj.map_or_else(|| "none".to_string(), |o| o.name().to_string()),
            flow: spec.name(),
            horizon: case.horizon.filter(|_| spec.time_scale().is_some()),
            x0: case.x0.clone(),
            final_error: x_star.as_deref().map(|xs| distance(&final_state, xs)),
            settling_time: x_star
                .as_deref()
                .and_then(|xs| integrator::settling_time(&traj, xs, eps)),
            final_f: *traj.f_vals.last().expect("non-empty"),
            final_state,
            settling_eps: eps,
            envelope: envelope.as_ref().map(EnvelopeSpec::kind),
            envelope_holds: report.as_ref().map(|r| r.holds),
            max_violation: report.as_ref().map(|r| r.max_violation),
            stop_reason: traj.stop_reason.as_str(),
            mode: mode_name(traj.mode),
            t_stop: traj.t_stop,
            steps: traj.steps,
            wall_time,
            settings,
        };
        Ok(RunOutput {
            case: case.clone(),
            trajectory: traj,
            summary,
        })
    }
}

/// `dir/stem.ext` becomes `dir/stem_label.ext`; an empty label leaves the
/// path unchanged.
pub fn with_label(path: &Path, label: &str) -> PathBuf {
    if label.is_empty() {
        return path.to_path_buf();
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{label}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{label}"),
    };
    path.with_file_name(name)
}
