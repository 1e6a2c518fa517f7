//! Scenario files, run orchestration and artifact emission.
//!
//! A scenario is a flat `key = value` text file with `[section]` headers;
//! numbers in decimal or scientific notation, lists comma-separated,
//! breakpoint pairs whitespace-separated inside list items. Unknown keys are
//! rejected. Runs emit `front.csv`, `energy.csv`, `field_t*.csv` snapshots,
//! a JSON report and an optional plot script; all CSV numbers carry 17
//! significant digits so the round trip is lossless.

use crate::dalembert::{Forcing, ProblemData};
use crate::duhamel::{solve_prescribed, SolverConfig, WaveSolution};
use crate::energy::{self, EnergyTrace};
use crate::error::{Error, Result};
use crate::geometry::Front;
use crate::griffith::{
    coupled_solve, verify_solution_pair, CoupledConfig, GriffithReport, Toughness,
    ToughnessKind, VerifyReport,
};
use crate::oracle::{fdm_solve_prescribed, FdmGrid};
use crate::pwlinear::Side;
use crate::sample::SampledFunction;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Mode {
    Prescribed,
    Coupled,
    Oracle,
    Verify,
}

/// One of the named analytic data presets, or a sample file.
#[derive(Debug, Clone)]
pub enum DataSpec {
    Zero,
    Constant(f64),
    /// `sin(k pi x / L)` for spatial data, `sin(k pi t)` for the load.
    Sine(f64),
    /// `c x` (spatial) or `c t` (load).
    Ramp(f64),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ToughnessSpec {
    pub model: String,
    pub value: f64,
    pub at: Option<f64>,
    pub override_value: Option<f64>,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub time_slope: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub nu: f64,
    pub ell0: f64,
    pub horizon: f64,
    pub delta: f64,
    pub u0: DataSpec,
    pub u1: DataSpec,
    pub w: DataSpec,
    pub front_breakpoints: Vec<(f64, f64)>,
    pub front_speed_cap: f64,
    pub front_file: Option<PathBuf>,
    pub toughness: Option<ToughnessSpec>,
    pub forcing: Option<(String, Vec<f64>)>,
    pub out_dir: PathBuf,
    pub snapshots: Vec<f64>,
    pub emit_plot: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub verify_tol: f64,
    pub subsonic_margin: f64,
    pub virtual_eps: Option<f64>,
}

/// CLI-level overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub delta: Option<f64>,
    pub tol: Option<f64>,
    pub horizon: Option<f64>,
    pub out: Option<PathBuf>,
}

fn parse_f64(v: &str, line: usize) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse { line, msg: format!("expected a number, got `{v}`") })
}

fn parse_list(v: &str, line: usize) -> Result<Vec<f64>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_f64(s, line))
        .collect()
}

fn parse_pairs(v: &str, line: usize) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for item in v.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let parts: Vec<&str> = item.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `t ell` pair, got `{item}`"),
            });
        }
        out.push((parse_f64(parts[0], line)?, parse_f64(parts[1], line)?));
    }
    Ok(out)
}

fn parse_data_spec(v: &str, line: usize) -> Result<DataSpec> {
    let mut it = v.split_whitespace();
    let head = it.next().unwrap_or("");
    let arg = it.next();
    let spec = match (head, arg) {
        ("zero", None) => DataSpec::Zero,
        ("constant", Some(c)) => DataSpec::Constant(parse_f64(c, line)?),
        ("sine", Some(k)) => DataSpec::Sine(parse_f64(k, line)?),
        ("ramp", Some(c)) => DataSpec::Ramp(parse_f64(c, line)?),
        ("file", Some(p)) => DataSpec::File(PathBuf::from(p)),
        _ => {
            return Err(Error::Parse {
                line,
                msg: format!("unknown data preset `{v}` (zero|constant c|sine k|ramp c|file p)"),
            });
        }
    };
    if it.next().is_some() {
        return Err(Error::Parse { line, msg: format!("trailing tokens in `{v}`") });
    }
    Ok(spec)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut sc = Self::parse(&text)?;
        if sc.name.is_empty() {
            sc.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into());
        }
        Ok(sc)
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let mut kv: BTreeMap<(String, String), (String, usize)> = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(Error::Parse { line: line_no, msg: "unterminated section".into() });
                }
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = (section.clone(), k.trim().to_string());
            if kv.insert(key, (v.trim().to_string(), line_no)).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{}`", k.trim()),
                });
            }
        }

        let mut take = |sec: &str, key: &str| kv.remove(&(sec.to_string(), key.to_string()));

        let mode = match take("", "mode") {
            Some((v, line)) => match v.as_str() {
                "prescribed" => Mode::Prescribed,
                "coupled" => Mode::Coupled,
                "oracle" => Mode::Oracle,
                "verify" => Mode::Verify,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown mode `{other}`"),
                    });
                }
            },
            None => Mode::Prescribed,
        };
        let name = take("", "name").map(|(v, _)| v).unwrap_or_default();
        let nu = take("", "nu").map(|(v, l)| parse_f64(&v, l)).transpose()?.unwrap_or(0.0);
        let ell0 = take("", "ell0").map(|(v, l)| parse_f64(&v, l)).transpose()?.unwrap_or(1.0);
        let horizon =
            take("", "horizon").map(|(v, l)| parse_f64(&v, l)).transpose()?.unwrap_or(0.5);
        let delta = take("", "delta").map(|(v, l)| parse_f64(&v, l)).transpose()?.unwrap_or(1e-3);

        let u0 = take("data", "u0").map(|(v, l)| parse_data_spec(&v, l)).transpose()?
            .unwrap_or(DataSpec::Zero);
        let u1 = take("data", "u1").map(|(v, l)| parse_data_spec(&v, l)).transpose()?
            .unwrap_or(DataSpec::Zero);
        let w = take("data", "w").map(|(v, l)| parse_data_spec(&v, l)).transpose()?
            .unwrap_or(DataSpec::Zero);

        let front_breakpoints = take("front", "breakpoints")
            .map(|(v, l)| parse_pairs(&v, l))
            .transpose()?
            .unwrap_or_default();
        let front_speed_cap = take("front", "speed_cap")
            .map(|(v, l)| parse_f64(&v, l))
            .transpose()?
            .unwrap_or(1.0);
        let front_file = take("front", "file").map(|(v, _)| PathBuf::from(v));

        let toughness = match take("toughness", "model") {
            Some((model, _)) => Some(ToughnessSpec {
                model,
                value: take("toughness", "value")
                    .map(|(v, l)| parse_f64(&v, l))
                    .transpose()?
                    .unwrap_or(0.5),
                at: take("toughness", "at").map(|(v, l)| parse_f64(&v, l)).transpose()?,
                override_value: take("toughness", "override_value")
                    .map(|(v, l)| parse_f64(&v, l))
                    .transpose()?,
                knots: take("toughness", "knots")
                    .map(|(v, l)| parse_list(&v, l))
                    .transpose()?
                    .unwrap_or_default(),
                values: take("toughness", "values")
                    .map(|(v, l)| parse_list(&v, l))
                    .transpose()?
                    .unwrap_or_default(),
                time_slope: take("toughness", "time_slope")
                    .map(|(v, l)| parse_f64(&v, l))
                    .transpose()?
                    .unwrap_or(0.0),
            }),
            None => None,
        };

        let forcing = match take("forcing", "preset") {
            Some((v, l)) => {
                let mut it = v.split_whitespace();
                let head = it.next().unwrap_or("").to_string();
                let args: Vec<f64> =
                    it.map(|s| parse_f64(s, l)).collect::<Result<_>>()?;
                Some((head, args))
            }
            None => None,
        };

        let out_dir = take("output", "dir")
            .map(|(v, _)| PathBuf::from(v))
            .unwrap_or_else(|| PathBuf::from("out"));
        let snapshots = take("output", "snapshots")
            .map(|(v, l)| parse_list(&v, l))
            .transpose()?
            .unwrap_or_default();
        let emit_plot = take("output", "plot")
            .map(|(v, l)| match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Parse { line: l, msg: format!("expected a boolean, got `{v}`") }),
            })
            .transpose()?
            .unwrap_or(false);

        let tol =
            take("solver", "tol").map(|(v, l)| parse_f64(&v, l)).transpose()?.unwrap_or(1e-10);
        let max_iter = take("solver", "max_iter")
            .map(|(v, l)| {
                v.parse::<usize>()
                    .map_err(|_| Error::Parse { line: l, msg: format!("bad max_iter `{v}`") })
            })
            .transpose()?
            .unwrap_or(200);
        let verify_tol = take("solver", "verify_tol")
            .map(|(v, l)| parse_f64(&v, l))
            .transpose()?
            .unwrap_or(1e-2);
        let subsonic_margin = take("solver", "subsonic_margin")
            .map(|(v, l)| parse_f64(&v, l))
            .transpose()?
            .unwrap_or(1e-6);
        let virtual_eps =
            take("solver", "virtual_eps").map(|(v, l)| parse_f64(&v, l)).transpose()?;

        if let Some(((sec, key), (_, line))) = kv.into_iter().next() {
            let place = if sec.is_empty() { key } else { format!("{sec}.{key}") };
            return Err(Error::Parse { line, msg: format!("unknown key `{place}`") });
        }

        let sc = Scenario {
            name,
            mode,
            nu,
            ell0,
            horizon,
            delta,
            u0,
            u1,
            w,
            front_breakpoints,
            front_speed_cap,
            front_file,
            toughness,
            forcing,
            out_dir,
            snapshots,
            emit_plot,
            tol,
            max_iter,
            verify_tol,
            subsonic_margin,
            virtual_eps,
        };
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| -> Result<()> {
            Err(Error::Validation { field: field.into(), msg: msg.into() })
        };
        if !(self.ell0 > 0.0) {
            return bad("ell0", "must be positive");
        }
        if self.nu < 0.0 {
            return bad("nu", "must be nonnegative");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon", "must be positive");
        }
        if !(self.delta > 0.0 && self.delta < self.ell0) {
            return bad("delta", "must lie in (0, ell0)");
        }
        if !(0.0 < self.front_speed_cap && self.front_speed_cap <= 1.0) {
            return bad("front.speed_cap", "must lie in (0, 1]");
        }
        if self.mode == Mode::Coupled && self.toughness.is_none() {
            return bad("toughness", "coupled mode needs a toughness model");
        }
        if let Some(t) = &self.toughness {
            match t.model.as_str() {
                "constant" | "piecewise_constant" | "lipschitz_sampled" | "sqrt_example"
                | "pointwise_override" | "time_dependent" => {}
                other => return bad("toughness.model", &format!("unknown model `{other}`")),
            }
            if t.value <= 0.0 {
                return bad("toughness.value", "must be positive");
            }
        }
        for &s in &self.snapshots {
            if s < 0.0 || s > self.horizon {
                return bad("output.snapshots", "snapshot times must lie in [0, horizon]");
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(d) = ov.delta {
            self.delta = d;
        }
        if let Some(t) = ov.tol {
            self.tol = t;
        }
        if let Some(h) = ov.horizon {
            self.horizon = h;
        }
        if let Some(o) = &ov.out {
            self.out_dir = o.clone();
        }
    }

    fn sample_spatial(&self, spec: &DataSpec) -> Result<SampledFunction> {
        let n = ((self.ell0 / self.delta).round() as usize).max(8);
        let l = self.ell0;
        Ok(match spec {
            DataSpec::Zero => SampledFunction::zero(0.0, l, n),
            DataSpec::Constant(c) => {
                let c = *c;
                SampledFunction::from_fn(0.0, l, n, |_| c)?.with_derivative_fn(|_| 0.0)
            }
            DataSpec::Sine(k) => {
                let om = k * std::f64::consts::PI / l;
                SampledFunction::from_fn(0.0, l, n, |x| (om * x).sin())?
                    .with_derivative_fn(|x| om * (om * x).cos())
            }
            DataSpec::Ramp(c) => {
                let c = *c;
                SampledFunction::from_fn(0.0, l, n, |x| c * x)?.with_derivative_fn(|_| c)
            }
            DataSpec::File(p) => load_samples(p)?,
        })
    }

    fn sample_load(&self, spec: &DataSpec) -> Result<SampledFunction> {
        let end = self.horizon + self.ell0;
        let n = ((end / self.delta).round() as usize).max(8);
        Ok(match spec {
            DataSpec::Zero => SampledFunction::zero(0.0, end, n),
            DataSpec::Constant(c) => {
                let c = *c;
                SampledFunction::from_fn(0.0, end, n, |_| c)?.with_derivative_fn(|_| 0.0)
            }
            DataSpec::Sine(k) => {
                let om = k * std::f64::consts::PI;
                SampledFunction::from_fn(0.0, end, n, |t| (om * t).sin())?
                    .with_derivative_fn(|t| om * (om * t).cos())
            }
            DataSpec::Ramp(c) => {
                let c = *c;
                SampledFunction::from_fn(0.0, end, n, |t| c * t)?.with_derivative_fn(|_| c)
            }
            DataSpec::File(p) => load_samples(p)?,
        })
    }

    pub fn build_problem(&self) -> Result<ProblemData> {
        let u0 = self.sample_spatial(&self.u0)?;
        let u1 = self.sample_spatial(&self.u1)?;
        let w = self.sample_load(&self.w)?;
        let forcing = match &self.forcing {
            None => None,
            Some((head, args)) => Some(match (head.as_str(), args.as_slice()) {
                ("none", _) => return ProblemData::new(self.nu, u0, u1, w, None),
                ("constant", [c]) => {
                    let c = *c;
                    Forcing::Analytic(Arc::new(move |_, _| c))
                }
                ("sine_x", [k, c]) => {
                    let (k, c) = (*k, *c);
                    let om = k * std::f64::consts::PI;
                    Forcing::Analytic(Arc::new(move |_, x| c * (om * x).sin()))
                }
                _ => {
                    return Err(Error::Validation {
                        field: "forcing.preset".into(),
                        msg: format!("unknown preset `{head}` (none|constant c|sine_x k c)"),
                    });
                }
            }),
        };
        ProblemData::new(self.nu, u0, u1, w, forcing)
    }

    pub fn build_front(&self) -> Result<Front> {
        if let Some(p) = &self.front_file {
            return load_front(p, self.front_speed_cap);
        }
        if self.front_breakpoints.is_empty() {
            return Front::new(vec![(0.0, self.ell0)], self.front_speed_cap);
        }
        Front::new(self.front_breakpoints.clone(), self.front_speed_cap)
    }

    pub fn build_toughness(&self) -> Result<Option<Toughness>> {
        let Some(spec) = &self.toughness else {
            return Ok(None);
        };
        let ell0 = self.ell0;
        let kind = match spec.model.as_str() {
            "constant" => ToughnessKind::Constant(spec.value),
            "piecewise_constant" => {
                if spec.knots.len() != spec.values.len() || spec.knots.is_empty() {
                    return Err(Error::Validation {
                        field: "toughness.knots".into(),
                        msg: "need matching nonempty knots/values".into(),
                    });
                }
                ToughnessKind::PiecewiseConstant {
                    knots: spec.knots.clone(),
                    values: spec.values.clone(),
                }
            }
            "lipschitz_sampled" => {
                if spec.knots.len() != spec.values.len() || spec.knots.len() < 2 {
                    return Err(Error::Validation {
                        field: "toughness.knots".into(),
                        msg: "need >= 2 matching knots/values".into(),
                    });
                }
                let profile = SampledFunction::new(
                    spec.knots[0],
                    *spec.knots.last().unwrap(),
                    spec.values.clone(),
                )?;
                let lip = spec
                    .values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs())
                    .fold(0.0f64, f64::max)
                    / profile.dx();
                ToughnessKind::LipschitzSampled { profile, lipschitz: lip }
            }
            "sqrt_example" => ToughnessKind::SqrtExample,
            "pointwise_override" => ToughnessKind::PointwiseOverride {
                base: Box::new(ToughnessKind::Constant(spec.value)),
                at: spec.at.unwrap_or(ell0),
                value: spec.override_value.ok_or_else(|| Error::Validation {
                    field: "toughness.override_value".into(),
                    msg: "pointwise_override needs a value".into(),
                })?,
            },
            "time_dependent" => {
                let ts: Vec<f64> = (0..=16).map(|i| self.horizon * i as f64 / 16.0).collect();
                let xs: Vec<f64> =
                    (0..=16).map(|i| ell0 + (ell0 + self.horizon) * i as f64 / 16.0).collect();
                let mut grid = Vec::with_capacity(ts.len() * xs.len());
                for &t in &ts {
                    for _ in &xs {
                        grid.push(spec.value * (1.0 + spec.time_slope * t));
                    }
                }
                ToughnessKind::TimeDependentSampled { ts, xs, grid }
            }
            _ => unreachable!("validated"),
        };
        let bounds = match &kind {
            ToughnessKind::Constant(v) => Some((*v, *v)),
            _ => None,
        };
        Ok(Some(Toughness { ell0, kind, bounds }))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.delta);
        cfg.tol = self.tol;
        cfg.max_iter = self.max_iter;
        cfg
    }

    pub fn coupled_config(&self) -> CoupledConfig {
        let mut cfg = CoupledConfig::new(self.delta);
        cfg.solver = self.solver_config();
        cfg.subsonic_margin = self.subsonic_margin;
        cfg.virtual_eps = self.virtual_eps.map(|e| e * self.ell0);
        cfg
    }
}

fn load_samples(path: &Path) -> Result<SampledFunction> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    let mut derivs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.contains("x")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if cols.len() < 2 {
            return Err(Error::Parse { line: i + 1, msg: "need `x,value[,deriv]`".into() });
        }
        xs.push(parse_f64(cols[0], i + 1)?);
        vals.push(parse_f64(cols[1], i + 1)?);
        if cols.len() >= 3 {
            derivs.push(parse_f64(cols[2], i + 1)?);
        }
    }
    if xs.len() < 2 {
        return Err(Error::Validation {
            field: "data file".into(),
            msg: "need at least two samples".into(),
        });
    }
    let dx = xs[1] - xs[0];
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - dx).abs() > 1e-9 * (1.0 + dx.abs()) {
            return Err(Error::Validation {
                field: "data file".into(),
                msg: "grid must be uniform".into(),
            });
        }
    }
    let f = SampledFunction::new(xs[0], *xs.last().unwrap(), vals)?;
    if derivs.len() == xs.len() {
        f.with_derivative_samples(derivs)
    } else {
        Ok(f)
    }
}

/// Reads a front from a CSV whose first two columns are `t` and `ell`
/// (exactly the layout `front.csv` uses).
pub fn load_front(path: &Path, speed_cap: f64) -> Result<Front> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut bps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("t,")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if cols.len() < 2 {
            return Err(Error::Parse { line: i + 1, msg: "need `t,ell,...`".into() });
        }
        bps.push((parse_f64(cols[0], i + 1)?, parse_f64(cols[1], i + 1)?));
    }
    Front::new(bps, speed_cap)
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn front_csv(
    sol: &WaveSolution,
    front: &Front,
    kappa: Option<&Toughness>,
    times: &[f64],
) -> Result<String> {
    let mut s = String::from("t,ell,ell_dot,g0,g_speed,kappa\n");
    for &t in times {
        let ell = front.ell(t);
        let speed = front.slope(t, Side::Right);
        let g0 = energy::release_rate_g0(sol, t)?;
        let gs = (1.0 - speed) / (1.0 + speed) * g0;
        let k = match kappa {
            Some(k) => k.eval(ell, Some(t))?,
            None => 0.0,
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt17(t),
            fmt17(ell),
            fmt17(speed),
            fmt17(g0),
            fmt17(gs),
            fmt17(k)
        );
    }
    Ok(s)
}

fn energy_csv(trace: &EnergyTrace) -> String {
    let mut s = String::from("t,internal,dissipated,total,work,balance_residual\n");
    for i in 0..trace.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt17(trace.times[i]),
            fmt17(trace.internal[i]),
            fmt17(trace.dissipated[i]),
            fmt17(trace.total[i]),
            fmt17(trace.work[i]),
            fmt17(trace.balance_residual[i])
        );
    }
    s
}

fn field_csv(sol: &WaveSolution, t: f64) -> Result<String> {
    let mut s = String::from("x,u,u_t,u_x\n");
    let ell = sol.front.ell(t);
    let delta = sol.windows[0].lattice.delta;
    let n = (ell / delta).floor() as usize;
    for j in 0..=n {
        let x = j as f64 * delta;
        if x >= ell {
            break;
        }
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt17(x),
            fmt17(sol.u(t, x)?),
            fmt17(sol.ut(t, x)?),
            fmt17(sol.ux(t, x)?)
        );
    }
    let _ = writeln!(s, "{},{},{},{}", fmt17(ell), fmt17(0.0), fmt17(0.0), fmt17(0.0));
    Ok(s)
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots front.csv / energy.csv produced alongside this script."""
import csv, os, sys

try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib required")

here = os.path.dirname(os.path.abspath(__file__))

def load(name):
    path = os.path.join(here, name)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}

fig, axes = plt.subplots(1, 2, figsize=(11, 4))
front = load("front.csv")
axes[0].plot(front["t"], front["ell"], label="ell(t)")
axes[0].set_xlabel("t"); axes[0].set_ylabel("front"); axes[0].legend()
energy = load("energy.csv")
for key in ("internal", "dissipated", "total", "work"):
    axes[1].plot(energy["t"], energy[key], label=key)
axes[1].set_xlabel("t"); axes[1].legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "overview.png"), dpi=130)
print("wrote", os.path.join(here, "overview.png"))
"#;

/// Everything a run leaves behind, summarized for the JSON report.
#[derive(Debug, serde::Serialize)]
pub struct RunSummary {
    pub name: String,
    pub mode: Mode,
    pub nu: f64,
    pub ell0: f64,
    pub horizon: f64,
    pub delta: f64,
    pub end_time: f64,
    pub truncated_at_sonic: Option<f64>,
    pub window_count: usize,
    pub total_iterations: usize,
    pub max_final_increment: f64,
    pub max_balance_residual: f64,
    pub max_inequality_violation: Option<f64>,
    pub max_complementarity: Option<f64>,
    pub diagnoses: Vec<String>,
    pub windows: Vec<crate::duhamel::WindowReport>,
    pub coupled_windows: Option<Vec<crate::griffith::CoupledWindowLog>>,
    pub verify: Option<VerifyReport>,
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub solution: Option<WaveSolution>,
    pub front: Option<Front>,
    pub energy: Option<EnergyTrace>,
    pub griffith: Option<GriffithReport>,
}

/// Runs a scenario and writes its artifacts. On a non-existence or
/// convergence failure a stub report with the diagnosis still lands on disk
/// before the error propagates.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutcome> {
    let out = sc.out_dir.clone();
    match run_scenario_inner(sc) {
        Ok(v) => Ok(v),
        Err(e) => {
            let stub = serde_json::json!({
                "name": sc.name,
                "error": e.to_string(),
                "exit_code": exit_code_for(&e),
            });
            let _ = write_file(
                &out.join("report.json"),
                &serde_json::to_string_pretty(&stub).unwrap_or_default(),
            );
            Err(e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Convergence(_) => 2,
        Error::NonExistence(_) => 3,
        Error::Validation { .. } | Error::Parse { .. } => 4,
        _ => 1,
    }
}

fn run_scenario_inner(sc: &Scenario) -> Result<RunOutcome> {
    let data = sc.build_problem()?;
    let kappa = sc.build_toughness()?;
    let cfg = sc.solver_config();

    let (sol, front, griffith): (WaveSolution, Front, Option<GriffithReport>) = match sc.mode {
        Mode::Prescribed | Mode::Verify => {
            let front = sc.build_front()?;
            let sol = solve_prescribed(&data, &front, sc.horizon, &cfg)?;
            (sol, front, None)
        }
        Mode::Coupled => {
            let kappa = kappa.as_ref().ok_or_else(|| Error::Validation {
                field: "toughness".into(),
                msg: "coupled mode needs a toughness model".into(),
            })?;
            let run = coupled_solve(&data, kappa, sc.horizon, &sc.coupled_config())?;
            (run.solution, run.front, Some(run.report))
        }
        Mode::Oracle => {
            let front = sc.build_front()?;
            let ny = ((1.0 / sc.delta).round() as usize).max(16);
            let grid = FdmGrid::new(ny, &front, sc.horizon)?;
            let field = fdm_solve_prescribed(&data, &front, sc.horizon, grid)?;
            // oracle runs emit only field snapshots and the report
            let mut s = String::from("t,ell\n");
            for &t in &field.times {
                let _ = writeln!(s, "{},{}", fmt17(t), fmt17(front.ell(t)));
            }
            write_file(&sc.out_dir.join("front.csv"), &s)?;
            for &snap in &sc.snapshots {
                let mut s = String::from("x,u,u_t,u_x\n");
                let ell = front.ell(snap);
                let n = (ell / sc.delta).floor() as usize;
                let h = 1e-6;
                for j in 0..=n {
                    let x = (j as f64 * sc.delta).min(ell);
                    let u = field.u(snap, x);
                    let ut = (field.u(snap + h, x) - field.u((snap - h).max(0.0), x))
                        / (2.0 * h).min(snap + h);
                    let ux = (field.u(snap, (x + h).min(ell)) - field.u(snap, (x - h).max(0.0)))
                        / ((x + h).min(ell) - (x - h).max(0.0));
                    let _ = writeln!(s, "{},{},{},{}", fmt17(x), fmt17(u), fmt17(ut), fmt17(ux));
                }
                write_file(
                    &sc.out_dir.join(format!("field_t{snap:.6}.csv").replace('.', "p")),
                    &s,
                )?;
            }
            let summary = RunSummary {
                name: sc.name.clone(),
                mode: sc.mode,
                nu: sc.nu,
                ell0: sc.ell0,
                horizon: sc.horizon,
                delta: sc.delta,
                end_time: *field.times.last().unwrap(),
                truncated_at_sonic: None,
                window_count: 0,
                total_iterations: field.times.len(),
                max_final_increment: 0.0,
                max_balance_residual: 0.0,
                max_inequality_violation: None,
                max_complementarity: None,
                diagnoses: vec![],
                windows: vec![],
                coupled_windows: None,
                verify: None,
            };
            write_file(
                &sc.out_dir.join("report.json"),
                &serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?,
            )?;
            return Ok(RunOutcome {
                summary,
                solution: None,
                front: Some(front),
                energy: None,
                griffith: None,
            });
        }
    };

    let trace = energy::energy_trace(&sol, &data, kappa.as_ref())?;
    let times = sol.lattice_times();
    write_file(
        &sc.out_dir.join("front.csv"),
        &front_csv(&sol, &front, kappa.as_ref(), &times)?,
    )?;
    write_file(&sc.out_dir.join("energy.csv"), &energy_csv(&trace))?;
    for &snap in &sc.snapshots {
        let snap_c = snap.min(sol.end_time());
        write_file(
            &sc.out_dir.join(format!("field_t{snap:.6}.csv").replace('.', "p")),
            &field_csv(&sol, snap_c)?,
        )?;
    }
    if sc.emit_plot {
        write_file(&sc.out_dir.join("plot.py"), PLOT_SCRIPT)?;
    }

    let summary = RunSummary {
        name: sc.name.clone(),
        mode: sc.mode,
        nu: sc.nu,
        ell0: sc.ell0,
        horizon: sc.horizon,
        delta: sc.delta,
        end_time: sol.end_time(),
        truncated_at_sonic: sol.report.truncated_at_sonic,
        window_count: sol.report.windows.len(),
        total_iterations: sol.report.windows.iter().map(|w| w.iterations).sum(),
        max_final_increment: sol
            .report
            .windows
            .iter()
            .map(|w| w.final_increment)
            .fold(0.0, f64::max),
        max_balance_residual: trace.max_balance_residual(),
        max_inequality_violation: griffith.as_ref().map(|g| g.max_inequality_violation),
        max_complementarity: griffith.as_ref().map(|g| g.max_complementarity),
        diagnoses: griffith.as_ref().map(|g| g.diagnoses.clone()).unwrap_or_default(),
        windows: sol.report.windows.clone(),
        coupled_windows: griffith.as_ref().map(|g| g.windows.clone()),
        verify: None,
    };
    write_file(
        &sc.out_dir.join("report.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    Ok(RunOutcome {
        summary,
        solution: Some(sol),
        front: Some(front),
        energy: Some(trace),
        griffith,
    })
}

/// `verify` verb: certify a candidate front against the scenario's data and
/// toughness. Returns the report; the front either comes from `front_path`
/// or from the scenario's own `[front] file` entry.
pub fn verify_scenario(sc: &Scenario, front_path: Option<&Path>) -> Result<VerifyReport> {
    let data = sc.build_problem()?;
    let kappa = sc
        .build_toughness()?
        .ok_or_else(|| Error::Validation {
            field: "toughness".into(),
            msg: "verify needs a toughness model".into(),
        })?;
    let front = match front_path {
        Some(p) => load_front(p, 1.0)?,
        None => sc.build_front()?,
    };
    let cfg = sc.solver_config();
    let horizon = sc.horizon;
    let (report, _sol) = verify_solution_pair(&data, &front, &kappa, horizon, &cfg)?;
    let payload = serde_json::json!({
        "name": sc.name,
        "verify": report,
        "tol": sc.verify_tol,
        "passed": report.max_residual() <= sc.verify_tol,
    });
    write_file(
        &sc.out_dir.join("verify.json"),
        &serde_json::to_string_pretty(&payload).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCN: &str = "\
name = demo
mode = prescribed
nu = 0
ell0 = 1.0
horizon = 0.25
delta = 2e-2

[data]
u0 = sine 1
u1 = zero
w = zero

[front]
breakpoints = 0 1.0, 0.25 1.0
";

    #[test]
    fn parse_round_trip() {
        let sc = Scenario::parse(SCN).unwrap();
        assert_eq!(sc.name, "demo");
        assert_eq!(sc.mode, Mode::Prescribed);
        assert_eq!(sc.front_breakpoints.len(), 2);
        assert!(matches!(sc.u0, DataSpec::Sine(k) if k == 1.0));
    }

    #[test]
    fn unknown_key_rejected() {
        let bad = format!("{SCN}\nwhatever = 3\n");
        let err = Scenario::parse(&bad).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn negative_ell0_rejected() {
        let bad = SCN.replace("ell0 = 1.0", "ell0 = -1.0");
        let err = Scenario::parse(&bad).unwrap_err();
        match err {
            Error::Validation { field, msg } => {
                assert_eq!(field, "ell0");
                assert!(msg.contains("positive"));
            }
            other => panic!("wrong error {other}"),
        }
    }

    #[test]
    fn parse_error_carries_line() {
        let bad = "name = x\nmode == prescribed\n";
        match Scenario::parse(bad).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("wrong error {other}"),
        }
    }
}
