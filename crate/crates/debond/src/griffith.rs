//! Toughness models, the front law, residual certification, and the coupled
//! solver that advances the front and the field together.
//!
//! The coupled step iterates a pair map: the field update is the same
//! backward-region fixed point as the prescribed solver, restricted to a
//! slanted strip hugging the front; the front update integrates
//! `(1 + max(release ratio, 1)) / 2` in the variable `y = t - ell(t)`, whose
//! inverse parameterizes the front. Windows are sized so the pair map
//! contracts, validated by the observed increments, and chained with a
//! locally frozen ("virtual") toughness.

use crate::dalembert::{ProblemData, TravellingParts, WindowData};
use crate::duhamel::{
    line_integral_qg, region_integral_qg, solve_window, Lattice, QuadGrid, SolveReport,
    SolverConfig, WaveField, WaveSolution, WindowSpec,
};
use crate::energy;
use crate::error::{Error, Result};
use crate::geometry::{CharMaps, Front};
use crate::pwlinear::{PiecewiseLinear, Side};
use crate::sample::SampledFunction;

/// Local toughness of the glue, `kappa > 0`, defined for `x >= ell0`;
/// evaluation at jump points is right-continuous.
#[derive(Debug, Clone)]
pub struct Toughness {
    pub ell0: f64,
    pub kind: ToughnessKind,
    /// Declared bounds `c1 <= kappa <= c2`, when known.
    pub bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub enum ToughnessKind {
    Constant(f64),
    /// Right-continuous steps: value `values[i]` on `[knots[i], knots[i+1])`,
    /// the last value extending to infinity. `knots[0]` must be `<= ell0`.
    PiecewiseConstant { knots: Vec<f64>, values: Vec<f64> },
    /// Piecewise-linear profile with a declared Lipschitz constant.
    LipschitzSampled { profile: SampledFunction, lipschitz: f64 },
    /// `1/2 max((1 - sqrt(x - ell0)) / (1 + sqrt(x - ell0)), 1/2)`: Lipschitz
    /// everywhere except at `x = ell0`, where uniqueness of the front fails.
    SqrtExample,
    /// A base model overridden at a single point (breaks right continuity).
    PointwiseOverride { base: Box<ToughnessKind>, at: f64, value: f64 },
    /// Bilinearly interpolated `kappa(t, x)` samples.
    TimeDependentSampled { ts: Vec<f64>, xs: Vec<f64>, grid: Vec<f64> },
}

impl Toughness {
    pub fn constant(ell0: f64, value: f64) -> Result<Self> {
        if value <= 0.0 {
            return Err(Error::Validation {
                field: "toughness".into(),
                msg: "must be positive".into(),
            });
        }
        Ok(Self { ell0, kind: ToughnessKind::Constant(value), bounds: Some((value, value)) })
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self.kind, ToughnessKind::TimeDependentSampled { .. })
    }

    fn eval_kind(kind: &ToughnessKind, ell0: f64, t: f64, x: f64) -> f64 {
        match kind {
            ToughnessKind::Constant(v) => *v,
            ToughnessKind::PiecewiseConstant { knots, values } => {
                let i = knots.partition_point(|&k| k <= x);
                values[i.saturating_sub(1).min(values.len() - 1)]
            }
            ToughnessKind::LipschitzSampled { profile, .. } => {
                let xc = x.clamp(profile.a(), profile.b());
                profile.eval(xc).unwrap_or(f64::NAN)
            }
            ToughnessKind::SqrtExample => {
                let r = (x - ell0).max(0.0).sqrt();
                0.5 * ((1.0 - r) / (1.0 + r)).max(0.5)
            }
            ToughnessKind::PointwiseOverride { base, at, value } => {
                if x == *at {
                    *value
                } else {
                    Self::eval_kind(base, ell0, t, x)
                }
            }
            ToughnessKind::TimeDependentSampled { ts, xs, grid } => {
                let locate = |knots: &[f64], v: f64| -> (usize, f64) {
                    let n = knots.len();
                    if v <= knots[0] {
                        return (0, 0.0);
                    }
                    if v >= knots[n - 1] {
                        return (n - 2, 1.0);
                    }
                    let i = knots.partition_point(|&k| k <= v).saturating_sub(1).min(n - 2);
                    (i, (v - knots[i]) / (knots[i + 1] - knots[i]))
                };
                let (i, a) = locate(ts, t);
                let (j, b) = locate(xs, x);
                let nx = xs.len();
                (1.0 - a) * ((1.0 - b) * grid[i * nx + j] + b * grid[i * nx + j + 1])
                    + a * ((1.0 - b) * grid[(i + 1) * nx + j] + b * grid[(i + 1) * nx + j + 1])
            }
        }
    }

    /// Right-continuous evaluation; errors for positions before the initial
    /// front. Time matters only for the time-dependent kind.
    pub fn eval(&self, x: f64, t: Option<f64>) -> Result<f64> {
        if x < self.ell0 - 1e-9 * (1.0 + self.ell0) {
            return Err(Error::Domain(format!(
                "toughness evaluated at {x} before the initial front {}",
                self.ell0
            )));
        }
        let v = Self::eval_kind(&self.kind, self.ell0, t.unwrap_or(0.0), x.max(self.ell0));
        if !(v > 0.0) {
            return Err(Error::Validation {
                field: "toughness".into(),
                msg: format!("nonpositive value {v} at x = {x}"),
            });
        }
        Ok(v)
    }

    /// Energy spent debonding up to time `t`: the spatial integral of kappa
    /// over the debonded increment (closed form where the model allows), or
    /// the path integral for the time-dependent kind.
    pub fn debond_dissipation(&self, front: &Front, t: f64) -> Result<f64> {
        let ell_t = front.ell(t);
        let ell0 = front.ell0();
        match &self.kind {
            ToughnessKind::Constant(v) => Ok(v * (ell_t - ell0)),
            ToughnessKind::PiecewiseConstant { knots, values } => {
                let mut acc = 0.0;
                let mut lo = ell0;
                while lo < ell_t - 1e-15 {
                    let i = knots.partition_point(|&k| k <= lo);
                    let iv = i.saturating_sub(1).min(values.len() - 1);
                    let hi = if i < knots.len() { knots[i].min(ell_t) } else { ell_t };
                    acc += values[iv] * (hi - lo);
                    lo = hi;
                }
                Ok(acc)
            }
            ToughnessKind::LipschitzSampled { profile, .. } => {
                profile.integral(ell0.max(profile.a()), ell_t.min(profile.b()))
            }
            ToughnessKind::SqrtExample => {
                // antiderivative of (1-r)/(1+r) * 2r dr with r = sqrt(x-ell0),
                // switching to the constant branch past r = 1/3
                let prim = |r: f64| -0.5 * r * r + 2.0 * r - 2.0 * (1.0 + r).ln();
                let u = (ell_t - ell0).max(0.0);
                let u_switch = 1.0 / 9.0;
                if u <= u_switch {
                    Ok(0.5 * prim(u.sqrt()))
                } else {
                    Ok(0.5 * prim(1.0 / 3.0) + 0.25 * (u - u_switch))
                }
            }
            ToughnessKind::PointwiseOverride { base, .. } => {
                // a single point has measure zero
                let inner =
                    Toughness { ell0: self.ell0, kind: (**base).clone(), bounds: self.bounds };
                inner.debond_dissipation(front, t)
            }
            ToughnessKind::TimeDependentSampled { .. } => {
                // \int_0^t kappa(s, ell(s)) ldot(s) ds on a fine partition
                let mut taus: Vec<f64> = vec![0.0];
                for (bt, _) in front.breakpoints() {
                    if bt > 0.0 && bt < t {
                        taus.push(bt);
                    }
                }
                taus.push(t);
                taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut acc = 0.0;
                for w in taus.windows(2) {
                    let n = ((w[1] - w[0]) / 1e-3).ceil().max(4.0) as usize;
                    let h = (w[1] - w[0]) / n as f64;
                    for k in 0..n {
                        let a = w[0] + k as f64 * h;
                        let b = a + h;
                        let fa = self.eval(front.ell(a), Some(a))?
                            * front.slope(0.5 * (a + b), Side::Right);
                        let fb = self.eval(front.ell(b), Some(b))?
                            * front.slope(0.5 * (a + b), Side::Right);
                        acc += 0.5 * (fa + fb) * h;
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Difference-quotient probe of right-Lipschitz regularity at `x`:
    /// classifies the one-sided behaviour as Lipschitz, an unbounded drop
    /// (uniqueness of the front not guaranteed) or an unbounded rise (the
    /// front law may admit no solution).
    pub fn right_regularity(&self, x: f64, t: Option<f64>, h0: f64) -> Result<RightRegularity> {
        let k0 = self.eval(x, t)?;
        let mut drops: Vec<f64> = Vec::new();
        let mut rises: Vec<f64> = Vec::new();
        let mut h = h0;
        for _ in 0..6 {
            let q = (self.eval(x + h, t)? - k0) / h;
            if q < 0.0 {
                drops.push(-q);
            } else if q > 0.0 {
                rises.push(q);
            } else {
                drops.push(0.0);
                rises.push(0.0);
            }
            h *= 0.5;
        }
        let unbounded = |qs: &[f64]| {
            qs.len() >= 4
                && qs.windows(2).all(|w| w[1] > 1.25 * w[0].max(1e-12))
                && *qs.last().unwrap() > 10.0 * (1.0 + k0)
        };
        Ok(RightRegularity {
            unbounded_drop: unbounded(&drops),
            unbounded_rise: unbounded(&rises),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RightRegularity {
    pub unbounded_drop: bool,
    pub unbounded_rise: bool,
}

/// The front law: `speed = max((g0 - kappa) / (g0 + kappa), 0)`, in `[0, 1)`.
pub fn griffith_speed(g0: f64, kappa: f64) -> f64 {
    debug_assert!(g0 >= 0.0 && kappa > 0.0);
    ((g0 - kappa) / (g0 + kappa)).max(0.0)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GriffithSample {
    pub t: f64,
    pub ell: f64,
    pub speed: f64,
    pub g0: f64,
    pub g_speed: f64,
    pub kappa: f64,
    /// `(G_speed - kappa)_+`
    pub inequality_violation: f64,
    /// `|(G_speed - kappa) * speed|`
    pub complementarity: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CoupledWindowLog {
    pub t_start: f64,
    pub t_end: f64,
    pub strip_width: f64,
    pub iterations: usize,
    pub final_increment: f64,
    pub worst_ratio: Option<f64>,
    pub halvings: usize,
    pub maximal_branch: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum Termination {
    Horizon,
    SonicLine,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GriffithReport {
    pub samples: Vec<GriffithSample>,
    pub windows: Vec<CoupledWindowLog>,
    pub termination: Termination,
    pub diagnoses: Vec<String>,
    pub max_inequality_violation: f64,
    pub max_complementarity: f64,
}

/// Per-time Griffith-criterion residuals of a solved pair.
pub fn griffith_residuals(
    sol: &WaveSolution,
    front: &Front,
    kappa: &Toughness,
    times: &[f64],
) -> Result<Vec<GriffithSample>> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let ell = front.ell(t);
        let speed = front.slope(t, Side::Right);
        let g0 = energy::release_rate_g0(sol, t)?;
        let g_speed = (1.0 - speed) / (1.0 + speed) * g0;
        let k = kappa.eval(ell, Some(t))?;
        out.push(GriffithSample {
            t,
            ell,
            speed,
            g0,
            g_speed,
            kappa: k,
            inequality_violation: (g_speed - k).max(0.0),
            complementarity: ((g_speed - k) * speed).abs(),
        });
    }
    Ok(out)
}

/// Coupled-solver configuration on top of the field solver knobs.
#[derive(Debug, Clone)]
pub struct CoupledConfig {
    pub solver: SolverConfig,
    /// Strict subsonic margin: the coupled front keeps slope `<= 1 - margin`.
    pub subsonic_margin: f64,
    /// Freeze radius for the virtual toughness; `None` means `0.1 * ell0`.
    pub virtual_eps: Option<f64>,
    pub max_windows: usize,
}

impl CoupledConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            solver: SolverConfig::new(delta),
            subsonic_margin: 1e-6,
            virtual_eps: None,
            max_windows: 10_000,
        }
    }
}

/// Output of a coupled run: the full field (prescribed-filled with the
/// converged front), the front itself, and the criterion report.
pub struct CoupledRun {
    pub solution: WaveSolution,
    pub front: Front,
    pub report: GriffithReport,
}

/// Toughness with values frozen past `tip + eps`, restoring the Lipschitz
/// bound the local fixed point needs.
struct VirtualToughness<'a> {
    inner: &'a Toughness,
    freeze_at: f64,
}

impl<'a> VirtualToughness<'a> {
    fn eval(&self, x: f64, t: Option<f64>) -> Result<f64> {
        self.inner.eval(x.min(self.freeze_at), t)
    }
}

enum StripOutcome {
    Converged {
        lambda: Vec<f64>,
        iterations: usize,
        final_increment: f64,
        worst_ratio: Option<f64>,
    },
    NotContracting,
    TooLong,
}

struct StripProblem<'a> {
    wdata: &'a WindowData,
    kappa: &'a VirtualToughness<'a>,
    time_dependent: bool,
    t0_global: f64,
    nu: f64,
    delta: f64,
    /// Column xi-offsets: strip columns sit at `x = c_m + t`.
    y_nodes: Vec<f64>,
    nt: usize,
    lambda_cap_slope: f64,
    g_fn: Option<&'a (dyn Fn(f64, f64) -> f64 + Sync)>,
    tol: f64,
    max_iter: usize,
    require_contraction: bool,
    seed_slope: f64,
}

impl<'a> StripProblem<'a> {
    fn t_target(&self) -> f64 {
        self.nt as f64 * self.delta
    }

    /// One application of the pair map; returns the new field rows and the
    /// new front parameterization.
    fn apply(
        &self,
        v: &QuadGrid,
        g: Option<&QuadGrid>,
        lambda: &[f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let nj = self.y_nodes.len();
        let delta = self.delta;

        // front induced by the current parameterization
        let mut bps: Vec<(f64, f64)> = Vec::with_capacity(nj);
        for (j, &y) in self.y_nodes.iter().enumerate() {
            bps.push((lambda[j], lambda[j] - y));
        }
        bps.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
        let front = Front::new(bps, 1.0)?;
        let maps = CharMaps::new(front)?;
        let parts = TravellingParts::new(self.wdata, &maps);

        // field update on the strip
        let coef = self.nu * self.nu / 8.0;
        let mut new_rows = vec![vec![0.0; nj]; self.nt + 1];
        for (i, row) in new_rows.iter_mut().enumerate() {
            let t = i as f64 * delta;
            for (m, item) in row.iter_mut().enumerate() {
                // column m has xi-label -(c_m); its y-label is y_nodes[nj-1-m]
                let y = self.y_nodes[nj - 1 - m];
                if lambda[nj - 1 - m] <= t {
                    continue; // outside the film: chi cuts it to zero
                }
                let x = t - y;
                let mut val = parts.eval_a(t, x)?;
                if self.nu > 0.0 {
                    let region = maps.region(t, x)?;
                    val += coef * region_integral_qg(v, &region, false);
                }
                if let Some(gq) = g {
                    let region = maps.region(t, x)?;
                    val += 0.5 * region_integral_qg(gq, &region, false);
                }
                *item = val;
            }
        }

        // front update: lambda'(y) = (1 + max(ratio, 1)) / 2
        let mut ratio = vec![0.0; nj];
        for (j, &y) in self.y_nodes.iter().enumerate() {
            let lam = lambda[j];
            let mut b = self.wdata.dv0(-y, Side::Left)? - self.wdata.v1_at(-y)?;
            if self.nu > 0.0 {
                b -= 0.25 * self.nu * self.nu * line_integral_qg(v, 0.0, lam, |tau| tau - y);
            }
            if let Some(gq) = g {
                b -= line_integral_qg(gq, 0.0, lam, |tau| tau - y);
            }
            let kt = if self.time_dependent { Some(self.t0_global + lam) } else { None };
            let k = self.kappa.eval(lam - y, kt)?;
            let lam_ratio = b * b / (2.0 * (self.nu * lam).exp() * k);
            ratio[j] = lam_ratio.min(self.lambda_cap_slope);
        }
        let mut new_lambda = vec![0.0; nj];
        for j in 1..nj {
            let f0 = 0.5 * (1.0 + ratio[j - 1].max(1.0));
            let f1 = 0.5 * (1.0 + ratio[j].max(1.0));
            new_lambda[j] = new_lambda[j - 1] + 0.5 * (f0 + f1) * delta;
        }
        Ok((new_rows, new_lambda))
    }

    fn iterate(&self) -> Result<StripOutcome> {
        let nj = self.y_nodes.len();
        let delta = self.delta;
        let t_target = self.t_target();
        let fronts_unclipped = vec![f64::INFINITY; self.nt + 1];
        let x0: Vec<f64> = (0..=self.nt)
            .map(|i| {
                // column 0 is the lowest xi-offset
                i as f64 * delta - self.y_nodes[nj - 1]
            })
            .collect();

        let g = self.g_fn.map(|gf| {
            let rows: Vec<Vec<f64>> = (0..=self.nt)
                .map(|i| {
                    let t = i as f64 * delta;
                    (0..nj).map(|m| gf(t, x0[i] + m as f64 * delta)).collect()
                })
                .collect();
            QuadGrid::new(delta, x0.clone(), rows, fronts_unclipped.clone())
        });

        // seed: stationary front (or the supplied faster slope), zero field
        let mut lambda: Vec<f64> = self
            .y_nodes
            .iter()
            .map(|&y| self.seed_slope * (y - self.y_nodes[0]))
            .collect();
        let zero_rows = vec![vec![0.0; nj]; self.nt + 1];
        let mut v = QuadGrid::new(delta, x0.clone(), zero_rows, fronts_unclipped.clone());

        let mut increments: Vec<f64> = Vec::new();
        let mut iterations = 0;
        loop {
            iterations += 1;
            let (new_rows, new_lambda) = self.apply(&v, g.as_ref(), &lambda)?;
            if *new_lambda.last().unwrap() > t_target * (1.0 + 1e-9) + delta {
                return Ok(StripOutcome::TooLong);
            }
            let mut dv2 = 0.0;
            for (a, b) in new_rows.iter().flatten().zip(v.rows.iter().flatten()) {
                dv2 += (a - b) * (a - b);
            }
            let dv = (dv2 * delta * delta).sqrt();
            let dl = new_lambda
                .iter()
                .zip(&lambda)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let inc = dv.max(dl);
            v.rows = new_rows;
            v.rebuild();
            lambda = new_lambda;
            increments.push(inc);
            if inc <= self.tol {
                break;
            }
            if iterations >= self.max_iter {
                if self.require_contraction {
                    return Ok(StripOutcome::NotContracting);
                }
                break;
            }
            if self.require_contraction && iterations >= 12 {
                let tail = &increments[increments.len() - 5..];
                let mean_ratio: f64 = tail
                    .windows(2)
                    .map(|w| (w[1] / w[0].max(1e-300)).min(10.0))
                    .product::<f64>()
                    .powf(0.25);
                if mean_ratio > 0.92 && inc > 100.0 * self.tol {
                    return Ok(StripOutcome::NotContracting);
                }
            }
        }

        let worst_ratio = if increments.len() >= 3 {
            let first = increments[0];
            increments
                .windows(2)
                .skip(1)
                .filter(|w| w[0] > self.tol && w[0] < first)
                .map(|w| w[1] / w[0])
                .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a: f64| a.max(r))))
        } else {
            None
        };
        Ok(StripOutcome::Converged {
            lambda,
            iterations,
            final_increment: *increments.last().unwrap(),
            worst_ratio,
        })
    }
}

/// Solves the coupled field/front problem up to `horizon`.
pub fn coupled_solve(
    data: &ProblemData,
    kappa: &Toughness,
    horizon: f64,
    cfg: &CoupledConfig,
) -> Result<CoupledRun> {
    let compat = crate::dalembert::check_compatibility(data, 0, None, cfg.solver.compat_tol)?;
    if !compat.passed() {
        let (cond, mag) = &compat.violations[0];
        return Err(Error::Validation {
            field: "initial data".into(),
            msg: format!("compatibility violated: {cond} off by {mag:.3e}"),
        });
    }

    let delta = cfg.solver.delta;
    let lambda_cap_slope = 2.0 / cfg.subsonic_margin - 1.0;
    let mut wdata = WindowData::from_problem(data)?;
    let mut t0 = 0.0f64;
    let mut fields: Vec<WaveField> = Vec::new();
    let mut front_bps: Vec<(f64, f64)> = vec![(0.0, data.ell0)];
    let mut logs: Vec<CoupledWindowLog> = Vec::new();
    let mut diagnoses: Vec<String> = Vec::new();
    let mut solve_report = SolveReport::default();
    let mut termination = Termination::Horizon;
    let mut tip_diagnosed = f64::NEG_INFINITY;

    while t0 < horizon - 0.5 * delta {
        if logs.len() >= cfg.max_windows {
            return Err(Error::Convergence(format!(
                "coupled solve exceeded {} windows",
                cfg.max_windows
            )));
        }
        let tip = wdata.ell0;
        let g0_tip = {
            let b = wdata.dv0_front - wdata.v1_front;
            0.5 * (-data.nu * t0).exp() * b * b
        };
        let kt = if kappa.is_time_dependent() { Some(t0) } else { None };
        let kappa_tip = kappa.eval(tip, kt)?;
        let reg = kappa.right_regularity(tip, kt, 8.0 * delta)?;

        // the front law demands motion at the tip but forbids it just
        // beyond: the no-Lipschitz-front pattern
        if reg.unbounded_rise && griffith_speed(g0_tip, kappa_tip) > 1e-6 {
            let mut blocked = true;
            for k in 1..=8 {
                let kk = kappa.eval(tip + k as f64 * delta, kt)?;
                if griffith_speed(g0_tip, kk) > 1e-9 {
                    blocked = false;
                    break;
                }
            }
            if blocked {
                return Err(Error::NonExistence(format!(
                    "front law oscillates at the tip x = {tip:.6}: speed \
                     {:.4} demanded at the tip, zero immediately beyond \
                     (toughness rises non-Lipschitz); no Lipschitz front exists",
                    griffith_speed(g0_tip, kappa_tip)
                )));
            }
        }

        let mut maximal_branch = false;
        if reg.unbounded_drop
            && (g0_tip - kappa_tip).abs() <= 1e-3 * kappa_tip.max(1.0)
            && tip > tip_diagnosed + 0.5 * delta
        {
            diagnoses.push(format!(
                "non-Lipschitz toughness at x = {tip:.6} with the release rate at \
                 threshold: uniqueness not guaranteed; continuing with the \
                 maximal-speed branch"
            ));
            tip_diagnosed = tip;
            maximal_branch = true;
        }

        let eps = cfg.virtual_eps.unwrap_or(0.1 * data.ell0);
        let vk = VirtualToughness { inner: kappa, freeze_at: tip + eps };

        // strip geometry: T first, then the width Y from the trailing-data
        // estimates, both validated by the observed contraction
        let t_cap = 0.45 * tip;
        let t_cap = if data.nu > 0.0 { t_cap.min(1.8 / (data.nu * data.nu * tip)) } else { t_cap };
        let remaining = horizon - t0;
        let nt_target = (((t_cap.min(remaining.max(delta))) / delta) + 1e-9).floor().max(1.0)
            as usize;
        let t_target = nt_target as f64 * delta;

        // crude data bounds on the trailing strip for the width heuristic
        let mut c1 = f64::INFINITY;
        for k in 0..=16 {
            c1 = c1.min(vk.eval(tip + eps * k as f64 / 16.0, kt)?);
        }
        let m_bound = {
            let mut sup_a = 0.0f64;
            for k in 0..=8 {
                let x = tip * (0.5 + 0.5 * k as f64 / 8.0);
                sup_a = sup_a.max(wdata.v0.eval(x.min(wdata.v0.end())).unwrap_or(0.0).abs());
            }
            2.0 * (sup_a + 1.0)
        };

        let mut jw = ((0.45 * tip / delta).floor() as usize).max(1);
        // shrink until the trailing-strip estimates fit the window budget
        loop {
            let y = jw as f64 * delta;
            let mut int_abs = 0.0;
            let mut int_sq = 0.0;
            let steps = jw.max(1);
            for k in 0..steps {
                let x = tip - y + (k as f64 + 0.5) * delta;
                let d = wdata.dv0(x, Side::Right).unwrap_or(0.0);
                let v1 = wdata.v1_at(x).unwrap_or(0.0);
                int_abs += (d.abs() + v1.abs()) * delta;
                int_sq += (d - v1) * (d - v1) * delta;
            }
            let ok = int_abs <= 0.5 * m_bound
                && y + 0.5 / c1 * int_sq <= 0.5 * t_target
                && y <= tip * 0.45;
            if ok || jw == 1 {
                break;
            }
            jw = (jw / 2).max(1);
        }

        let mut halvings = 0usize;
        let outcome = loop {
            let y_nodes: Vec<f64> = (0..=jw).map(|j| -tip + j as f64 * delta).collect();
            let seed_slope = if maximal_branch {
                // dominate the fastest admissible branch over this window
                let mut k_min = kappa_tip;
                for k in 0..=16 {
                    let x = tip + t_target * k as f64 / 16.0;
                    k_min = k_min.min(vk.eval(x, kt)?);
                }
                1.0 / (1.0 - griffith_speed(g0_tip.max(kappa_tip), k_min)).max(1e-3)
            } else {
                1.0
            };
            let t0c = t0;
            let dat = data.clone();
            let g_closure: Option<Box<dyn Fn(f64, f64) -> f64 + Sync>> =
                data.forcing.as_ref().map(|_| {
                    Box::new(move |s: f64, x: f64| dat.g(t0c + s, x))
                        as Box<dyn Fn(f64, f64) -> f64 + Sync>
                });
            let strip = StripProblem {
                wdata: &wdata,
                kappa: &vk,
                time_dependent: kappa.is_time_dependent(),
                t0_global: t0,
                nu: data.nu,
                delta,
                y_nodes,
                nt: nt_target,
                lambda_cap_slope,
                g_fn: g_closure.as_deref(),
                tol: cfg.solver.tol,
                max_iter: if maximal_branch { 2 * cfg.solver.max_iter } else { cfg.solver.max_iter },
                require_contraction: !maximal_branch,
                seed_slope,
            };
            match strip.iterate()? {
                StripOutcome::Converged { lambda, iterations, final_increment, worst_ratio } => {
                    break (lambda, iterations, final_increment, worst_ratio);
                }
                StripOutcome::TooLong | StripOutcome::NotContracting => {
                    if jw == 1 {
                        if !maximal_branch && kappa.right_regularity(tip, kt, 8.0 * delta)?.unbounded_drop
                        {
                            diagnoses.push(format!(
                                "non-Lipschitz toughness at x = {tip:.6}: window \
                                 halving cascade exhausted; uniqueness not \
                                 guaranteed; continuing with the maximal-speed branch"
                            ));
                            maximal_branch = true;
                            halvings = 0;
                            jw = ((0.45 * tip / delta).floor() as usize).max(1);
                            continue;
                        }
                        return Err(Error::Convergence(format!(
                            "coupled window at t = {t0}: pair map not contracting \
                             even at the minimal strip width"
                        )));
                    }
                    jw = (jw / 2).max(1);
                    halvings += 1;
                }
            }
        };
        let (lambda, iterations, final_increment, worst_ratio) = outcome;

        // accepted time span: stay on the lattice, inside the strip's
        // knowledge, and inside the virtual-toughness freeze radius
        let lam_pl = PiecewiseLinear::new(
            (0..=jw).map(|j| -tip + j as f64 * delta).collect(),
            lambda.clone(),
        )?;
        let mut t_w = lambda[jw].min(t_target);
        if let Some(t_exit) = lam_pl
            .knots()
            .iter()
            .zip(lam_pl.values())
            .find(|(&y, &l)| l - y >= tip + eps)
            .map(|(_, &l)| l)
        {
            t_w = t_w.min(t_exit);
        }
        let nt_w = ((t_w / delta) + 1e-9).floor().max(1.0) as usize;
        let t_w = (nt_w as f64 * delta).min(t_target);

        // front segment on [0, t_w]
        let mut seg: Vec<(f64, f64)> = vec![(0.0, tip)];
        for (j, &lam) in lambda.iter().enumerate() {
            if lam > 1e-15 && lam < t_w - 1e-15 {
                seg.push((lam, lam - (-tip + j as f64 * delta)));
            }
        }
        let ell_end = {
            // invert lambda at t_w
            let inv = lam_pl.inverse()?;
            t_w - inv.eval(t_w)
        };
        seg.push((t_w, ell_end));
        seg.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-13);
        let front_seg = Front::new(seg.clone(), 1.0 - 0.5 * cfg.subsonic_margin)?;

        // fill the full field over the accepted span with the front now known
        let (mut new_fields, next_wdata, mut wreports) =
            chain_prescribed(&wdata, &front_seg, t0, t_w, &cfg.solver, data)?;

        // backstop: a converged window whose output still violates the
        // complementarity at the tip signals the no-solution pattern
        fields.append(&mut new_fields);
        {
            let full_front = global_front(&front_bps, &seg, t0)?;
            let mut rep = solve_report.clone();
            rep.end_time = t0 + t_w;
            let probe = WaveSolution {
                nu: data.nu,
                front: full_front.clone(),
                windows: std::mem::take(&mut fields),
                report: rep,
            };
            let n_probe = 8.min(nt_w);
            let ts: Vec<f64> =
                (0..=n_probe).map(|k| t0 + k as f64 * t_w / n_probe as f64).collect();
            let samples = griffith_residuals(&probe, &full_front, kappa, &ts)?;
            let viol = samples.iter().map(|s| s.complementarity).fold(0.0f64, f64::max);
            fields = probe.windows;
            let thresh = 10.0 * delta * (1.0 + g0_tip.max(1.0));
            if viol > thresh && reg.unbounded_rise {
                return Err(Error::NonExistence(format!(
                    "front law oscillates at the tip x = {tip:.6}: converged \
                     window still violates complementarity by {viol:.3e} \
                     (threshold {thresh:.3e}); no Lipschitz front exists"
                )));
            }
        }

        for (t, e) in &seg {
            if *t > 1e-15 {
                front_bps.push((t0 + t, *e));
            }
        }
        solve_report.windows.append(&mut wreports);
        logs.push(CoupledWindowLog {
            t_start: t0,
            t_end: t0 + t_w,
            strip_width: jw as f64 * delta,
            iterations,
            final_increment,
            worst_ratio,
            halvings,
            maximal_branch,
        });
        wdata = next_wdata;
        t0 += t_w;
        solve_report.end_time = t0;

        // the coupled front stays subsonic by construction, but guard the
        // sonic line anyway
        if t0 >= wdata.ell0 {
            termination = Termination::SonicLine;
            break;
        }
    }

    let front = global_front(&front_bps, &[], 0.0)?;
    let solution = WaveSolution {
        nu: data.nu,
        front: front.clone(),
        windows: fields,
        report: solve_report,
    };
    let times = solution.lattice_times();
    let samples = griffith_residuals(&solution, &front, kappa, &times)?;
    let max_ineq = samples.iter().map(|s| s.inequality_violation).fold(0.0f64, f64::max);
    let max_comp = samples.iter().map(|s| s.complementarity).fold(0.0f64, f64::max);
    let report = GriffithReport {
        samples,
        windows: logs,
        termination,
        diagnoses,
        max_inequality_violation: max_ineq,
        max_complementarity: max_comp,
    };
    Ok(CoupledRun { solution, front, report })
}

fn global_front(bps: &[(f64, f64)], seg_local: &[(f64, f64)], t0: f64) -> Result<Front> {
    let mut all = bps.to_vec();
    for (t, e) in seg_local {
        if *t > 1e-15 {
            all.push((t0 + t, *e));
        }
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    all.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-13);
    Front::new(all, 1.0)
}

/// Prescribed-front window chain starting from arbitrary window data (the
/// local front is anchored at the chain's start).
pub(crate) fn chain_prescribed(
    wdata: &WindowData,
    front_local: &Front,
    t0_global: f64,
    t_len: f64,
    cfg: &SolverConfig,
    data_for_g: &ProblemData,
) -> Result<(Vec<WaveField>, WindowData, Vec<crate::duhamel::WindowReport>)> {
    let delta = cfg.delta;
    let mut fields = Vec::new();
    let mut reports = Vec::new();
    let mut s0 = 0.0f64;
    let mut wd = wdata.clone();
    while s0 < t_len - 0.5 * delta {
        let ell_here = front_local.ell(s0);
        let bound = cfg.window_safety * Lattice::window_bound(ell_here, data_for_g.nu);
        let remaining = t_len - s0;
        let nt_bound = ((bound / delta) + 1e-9).floor() as usize;
        let nt_remaining = ((remaining / delta) + 1e-9).floor() as usize;
        let nt = nt_bound.min(nt_remaining.max(1)).max(1);
        let sub_len = nt as f64 * delta;
        let sub_front = front_local.shifted(s0, sub_len)?;
        let t_here = t0_global + s0;
        let dat = data_for_g.clone();
        let g_closure: Option<Box<dyn Fn(f64, f64) -> f64 + Sync>> =
            data_for_g.forcing.as_ref().map(|_| {
                Box::new(move |s: f64, x: f64| dat.g(t_here + s, x))
                    as Box<dyn Fn(f64, f64) -> f64 + Sync>
            });
        let field = solve_window(WindowSpec {
            data: wd,
            front_local: sub_front,
            t_start: t0_global + s0,
            nt,
            cfg,
            g_fn: g_closure.as_deref(),
            skip_bound_check: false,
        })?;
        wd = crate::duhamel::restart_data(&field, &data_for_g.w)?;
        reports.push(field.report.clone());
        fields.push(field);
        s0 += sub_len;
    }
    Ok((fields, wd, reports))
}

/// Residual certification of an arbitrary candidate pair: the front from the
/// caller, the field re-solved for that front. Returns the refined
/// fixed-point residual, the front-law residual (both L1 and sup over the
/// sampled times), and the boundary/initial trace defects.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VerifyReport {
    pub fixed_point_residual: f64,
    pub ode_residual_l1: f64,
    pub ode_residual_sup: f64,
    pub initial_trace: f64,
    pub boundary_trace: f64,
    pub front_trace: f64,
}

impl VerifyReport {
    pub fn max_residual(&self) -> f64 {
        self.fixed_point_residual
            .max(self.ode_residual_l1)
            .max(self.initial_trace)
            .max(self.boundary_trace)
            .max(self.front_trace)
    }
}

pub fn verify_solution_pair(
    data: &ProblemData,
    front: &Front,
    kappa: &Toughness,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<(VerifyReport, WaveSolution)> {
    let sol = crate::duhamel::solve_prescribed(data, front, horizon, cfg)?;
    let mut fp = 0.0f64;
    for w in &sol.windows {
        fp = fp.max(w.fixed_point_residual(true)?);
    }

    let times = sol.lattice_times();
    let mut l1 = 0.0;
    let mut sup = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for &t in &times {
        let g0 = energy::release_rate_g0(&sol, t)?;
        let k = kappa.eval(front.ell(t), Some(t))?;
        let r = (front.slope(t, Side::Right) - griffith_speed(g0, k)).abs();
        sup = sup.max(r);
        if let Some((tp, rp)) = prev {
            l1 += 0.5 * (rp + r) * (t - tp);
        }
        prev = Some((t, r));
    }

    let mut initial_trace = 0.0f64;
    for k in 0..=50 {
        let x = data.ell0 * k as f64 / 50.0;
        initial_trace = initial_trace.max((sol.v(0.0, x)? - data.v0.eval(x)?).abs());
    }
    let mut boundary_trace = 0.0f64;
    let mut front_trace = 0.0f64;
    for &t in &times {
        boundary_trace = boundary_trace.max((sol.v(t, 0.0)? - data.z(t)?).abs());
        let ell = front.ell(t);
        front_trace = front_trace.max(sol.v(t, ell - 1e-9 * (1.0 + ell))?.abs());
    }

    Ok((
        VerifyReport {
            fixed_point_residual: fp,
            ode_residual_l1: l1,
            ode_residual_sup: sup,
            initial_trace,
            boundary_trace,
            front_trace,
        },
        sol,
    ))
}
