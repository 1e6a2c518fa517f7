//! Fixed-point solver for the damped wave equation on the growing domain,
//! window by window.
//!
//! Each window solves `v = A + (nu^2/8) * (integral of v over the backward
//! region) + (1/2) * (integral of the transformed forcing)` by Picard
//! iteration on a characteristic lattice (equal time and space step), then
//! restarts from its final slice. The update is a strict contraction when
//! the window length satisfies `nu^2 * ell * T < 4` and `T < ell / 2`; the
//! chained window lengths follow that bound with a safety factor.

use crate::dalembert::{ProblemData, TravellingParts, WindowData};
use crate::error::{Error, Result};
use crate::geometry::{CharMaps, Front, Region, Zone};
use crate::pwlinear::Side;
use crate::sample::SampledFunction;
use rayon::prelude::*;

/// Solver knobs. Defaults: sup-norm increment tolerance 1e-10, 200 Picard
/// iterations, window length at 0.9x the contraction bound.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub window_safety: f64,
    pub compat_tol: f64,
}

impl SolverConfig {
    pub fn new(delta: f64) -> Self {
        Self { delta, tol: 1e-10, max_iter: 200, window_safety: 0.9, compat_tol: 1e-8 }
    }
}

/// Characteristic lattice of one window: local times `i * delta` for
/// `i = 0..=nt`, positions `x0(i) + j * delta` for `j = 0..=nx`. The film
/// interior is padded by zero nodes past the front.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub delta: f64,
    /// Global time of local slice 0.
    pub t_start: f64,
    pub nt: usize,
    pub nx: usize,
}

impl Lattice {
    pub fn t_local(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.nt as f64 * self.delta
    }

    /// Contraction-window bound for a front of length `ell` at the window
    /// start: `0.5 * min(ell/2, 4/(nu^2 ell))`.
    pub fn window_bound(ell: f64, nu: f64) -> f64 {
        if nu == 0.0 {
            0.25 * ell
        } else {
            0.5 * (0.5 * ell).min(4.0 / (nu * nu * ell))
        }
    }
}

/// Lattice samples of one scalar field with per-slice interpolation,
/// front-aware clipping and exact prefix integrals. All quadratures in this
/// module reduce to evaluations of this structure, so a constant field
/// integrates exactly over any region with piecewise-linear boundaries.
#[derive(Debug, Clone)]
pub(crate) struct QuadGrid {
    pub delta: f64,
    /// x-position of column 0, per slice (0 for the full lattice, slanted
    /// for the near-front strip of the coupled solver).
    pub x0: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    /// Front position per slice; `INFINITY` disables clipping.
    pub front: Vec<f64>,
    /// Last column strictly inside the front, per slice.
    pub k_in: Vec<usize>,
    prefix: Vec<Vec<f64>>,
}

impl QuadGrid {
    pub fn new(delta: f64, x0: Vec<f64>, rows: Vec<Vec<f64>>, front: Vec<f64>) -> Self {
        let mut qg =
            Self { delta, x0, rows, front, k_in: Vec::new(), prefix: Vec::new() };
        qg.rebuild();
        qg
    }

    pub fn rebuild(&mut self) {
        let n_slices = self.rows.len();
        self.k_in = Vec::with_capacity(n_slices);
        self.prefix = Vec::with_capacity(n_slices);
        for i in 0..n_slices {
            let nx = self.rows[i].len() - 1;
            let k = if self.front[i].is_infinite() {
                nx
            } else {
                let u = (self.front[i] - self.x0[i]) / self.delta;
                // last node strictly below the front
                let mut k = if u <= 0.0 { 0 } else { (u.ceil() as usize).saturating_sub(1) };
                if (self.x0[i] + k as f64 * self.delta) >= self.front[i] {
                    k = k.saturating_sub(1);
                }
                k.min(nx)
            };
            let row = &self.rows[i];
            let mut p = Vec::with_capacity(nx + 1);
            p.push(0.0);
            for j in 1..=nx {
                let cell = if j <= k {
                    0.5 * (row[j - 1] + row[j]) * self.delta
                } else if j == k + 1 && !self.front[i].is_infinite() {
                    // interpolant ramps from row[k] to 0 at the front knot
                    let w = (self.front[i] - (self.x0[i] + k as f64 * self.delta))
                        .clamp(0.0, self.delta);
                    0.5 * row[k] * w
                } else {
                    0.0
                };
                p.push(p[j - 1] + cell);
            }
            self.k_in.push(k);
            self.prefix.push(p);
        }
    }

    /// Slice interpolant value; zero outside the covered span and at or past
    /// the front.
    pub fn sample(&self, i: usize, x: f64) -> f64 {
        let row = &self.rows[i];
        let nx = row.len() - 1;
        let rel = x - self.x0[i];
        if rel <= -1e-12 {
            return 0.0;
        }
        let fr = self.front[i];
        if x >= fr {
            return 0.0;
        }
        let k = self.k_in[i];
        let xk = self.x0[i] + k as f64 * self.delta;
        if !fr.is_infinite() && x > xk {
            return row[k] * (fr - x) / (fr - xk);
        }
        let u = (rel / self.delta).clamp(0.0, nx as f64);
        let j = (u.floor() as usize).min(nx - 1);
        let s = (u - j as f64).clamp(0.0, 1.0);
        row[j] + s * (row[j + 1] - row[j])
    }

    /// Exact integral of the slice interpolant from `x0(i)` to `x`.
    pub fn prefix_eval(&self, i: usize, x: f64) -> f64 {
        let row = &self.rows[i];
        let nx = row.len() - 1;
        let rel = x - self.x0[i];
        if rel <= 0.0 {
            return 0.0;
        }
        let fr = self.front[i];
        let k = self.k_in[i];
        let xk = self.x0[i] + k as f64 * self.delta;
        if !fr.is_infinite() && x > xk {
            if x >= fr {
                return self.prefix[i][nx.min(k + 1).max(k)]
                    .max(self.prefix[i][k] + 0.5 * row[k] * (fr - xk));
            }
            let w = x - xk;
            let y_here = row[k] * (fr - x) / (fr - xk);
            return self.prefix[i][k] + 0.5 * (row[k] + y_here) * w;
        }
        let u = (rel / self.delta).min(nx as f64);
        let j = (u.floor() as usize).min(nx - 1);
        let w = rel - j as f64 * self.delta;
        let s = (w / self.delta).clamp(0.0, 1.0);
        let y_here = row[j] + s * (row[j + 1] - row[j]);
        self.prefix[i][j] + 0.5 * (row[j] + y_here) * w.max(0.0)
    }

    pub fn seg_integral(&self, i: usize, a: f64, b: f64) -> f64 {
        self.prefix_eval(i, b) - self.prefix_eval(i, a)
    }

    fn slice_blend(&self, tau: f64) -> (usize, usize, f64) {
        let n = self.rows.len();
        let u = (tau / self.delta).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 1);
        let theta = (u - i as f64).clamp(0.0, 1.0);
        if theta == 0.0 || i + 1 >= n {
            (i, i, 0.0)
        } else {
            (i, i + 1, theta)
        }
    }

    /// Interpolant value at off-slice time `tau` (linear blend of slices).
    pub fn sample_at(&self, tau: f64, x: f64) -> f64 {
        let (i0, i1, th) = self.slice_blend(tau);
        if i0 == i1 {
            self.sample(i0, x)
        } else {
            (1.0 - th) * self.sample(i0, x) + th * self.sample(i1, x)
        }
    }

    /// `\int_a^b` of the interpolant at off-slice time `tau`.
    pub fn seg_integral_at(&self, tau: f64, a: f64, b: f64) -> f64 {
        let (i0, i1, th) = self.slice_blend(tau);
        if i0 == i1 {
            self.seg_integral(i0, a, b)
        } else {
            (1.0 - th) * self.seg_integral(i0, a, b) + th * self.seg_integral(i1, a, b)
        }
    }
}

/// Trapezoid partition of `[0, t]`: lattice times, boundary kinks of the
/// region, and the endpoint.
fn tau_partition(t: f64, delta: f64, kinks: &[f64]) -> Vec<f64> {
    let n = (t / delta + 1e-9).floor() as usize;
    let mut taus: Vec<f64> = (0..=n).map(|i| i as f64 * delta).collect();
    taus.extend(kinks.iter().copied().filter(|&k| k > 0.0 && k < t));
    if *taus.last().unwrap() < t - 1e-15 * (1.0 + t) {
        taus.push(t);
    }
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    taus.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * (1.0 + t));
    taus
}

/// `\iint_R F` over a backward region, trapezoidal in time over exact slice
/// integrals. `refine` halves the time step of the outer quadrature (used by
/// the post-hoc fixed-point check).
pub(crate) fn region_integral_qg(qg: &QuadGrid, region: &Region, refine: bool) -> f64 {
    let mut taus = tau_partition(region.t, qg.delta, &region.kinks());
    if refine {
        let mut extra = Vec::with_capacity(taus.len());
        for w in taus.windows(2) {
            extra.push(0.5 * (w[0] + w[1]));
        }
        taus.extend(extra);
        taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let width = |tau: f64| -> f64 {
        qg.seg_integral_at(tau, region.gamma1(tau), region.gamma2(tau))
    };
    let mut acc = 0.0;
    let mut prev_tau = taus[0];
    let mut prev_s = width(prev_tau);
    for &tau in &taus[1..] {
        let s = width(tau);
        acc += 0.5 * (prev_s + s) * (tau - prev_tau);
        prev_tau = tau;
        prev_s = s;
    }
    acc
}

/// `\int_{t0}^{t1} F(tau, sigma(tau)) d tau` along a characteristic, with
/// lattice times as quadrature nodes.
pub(crate) fn line_integral_qg(
    qg: &QuadGrid,
    t0: f64,
    t1: f64,
    sigma: impl Fn(f64) -> f64,
) -> f64 {
    if t1 <= t0 + 1e-15 {
        return 0.0;
    }
    let i0 = (t0 / qg.delta - 1e-9).ceil().max(0.0) as usize;
    let i1 = (t1 / qg.delta + 1e-9).floor() as usize;
    let mut taus: Vec<f64> = Vec::with_capacity(i1.saturating_sub(i0) + 3);
    taus.push(t0);
    for i in i0..=i1 {
        let tau = i as f64 * qg.delta;
        if tau > t0 + 1e-13 && tau < t1 - 1e-13 {
            taus.push(tau);
        }
    }
    taus.push(t1);
    let mut acc = 0.0;
    let mut prev_tau = taus[0];
    let mut prev_f = qg.sample_at(prev_tau, sigma(prev_tau));
    for &tau in &taus[1..] {
        let f = qg.sample_at(tau, sigma(tau));
        acc += 0.5 * (prev_f + f) * (tau - prev_tau);
        prev_tau = tau;
        prev_f = f;
    }
    acc
}

/// Time and space derivatives of `H(t,x) = \iint_{R(t,x)} F` by the
/// zone-split characteristic line integrals.
pub(crate) fn h_derivatives_qg(
    qg: &QuadGrid,
    maps: &CharMaps,
    t: f64,
    x: f64,
    side: Side,
) -> Result<(f64, f64)> {
    match maps.classify(t, x) {
        Zone::Bonded => return Ok((0.0, 0.0)),
        Zone::MultiplyReflected => {
            return Err(Error::Domain(format!(
                "H derivatives not representable at ({t}, {x})"
            )));
        }
        _ => {}
    }
    let eta = t + x;
    let xi = x - t;
    match maps.classify(t, x) {
        Zone::Direct => {
            let i_plus = line_integral_qg(qg, 0.0, t, |tau| eta - tau);
            let i_minus = line_integral_qg(qg, 0.0, t, |tau| xi + tau);
            Ok((i_plus + i_minus, i_plus - i_minus))
        }
        Zone::BoundaryReflected => {
            let i_plus = line_integral_qg(qg, 0.0, t, |tau| eta - tau);
            let j1 = line_integral_qg(qg, 0.0, t - x, |tau| (t - x) - tau);
            let j2 = line_integral_qg(qg, t - x, t, |tau| tau - (t - x));
            Ok((i_plus - j1 + j2, i_plus + j1 - j2))
        }
        Zone::FrontReflected => {
            let switch = maps.time_at_eta(eta).clamp(0.0, t);
            let w = maps.reflect(eta)?;
            let wdot = maps.reflect_slope(eta, side)?;
            let i_minus = line_integral_qg(qg, 0.0, t, |tau| xi + tau);
            let k1 = wdot * line_integral_qg(qg, 0.0, switch, |tau| tau - w);
            let k2 = line_integral_qg(qg, switch, t, |tau| eta - tau);
            Ok((i_minus - k1 + k2, -i_minus - k1 + k2))
        }
        _ => unreachable!(),
    }
}

/// Per-window progress record.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WindowReport {
    pub t_start: f64,
    pub t_end: f64,
    pub ell_start: f64,
    pub iterations: usize,
    pub final_increment: f64,
    /// Worst increment ratio past the first iterate, when observable.
    pub contraction_estimate: Option<f64>,
    pub restart_trace_defect: f64,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct SolveReport {
    pub windows: Vec<WindowReport>,
    pub end_time: f64,
    /// Set when the run stopped at the sonic time before the horizon.
    pub truncated_at_sonic: Option<f64>,
}

/// Converged field of one window, in window-local time.
pub struct WaveField {
    pub lattice: Lattice,
    pub nu: f64,
    pub(crate) maps: CharMaps,
    pub(crate) data: WindowData,
    pub(crate) v: QuadGrid,
    pub(crate) vt: Vec<Vec<f64>>,
    pub(crate) vx: Vec<Vec<f64>>,
    pub(crate) g: Option<QuadGrid>,
    /// Interior one-sided `(v_t, v_x)` at the front, per slice.
    pub(crate) front_deriv: Vec<(f64, f64)>,
    pub report: WindowReport,
}

impl WaveField {
    pub fn front_local(&self) -> &Front {
        self.maps.front()
    }

    fn col_count(&self) -> usize {
        self.lattice.nx
    }

    fn deriv_interp_slice(&self, which_t: bool, i: usize, x: f64) -> f64 {
        let rows = if which_t { &self.vt } else { &self.vx };
        let fr = self.v.front[i];
        if x >= fr {
            return 0.0;
        }
        let k = self.v.k_in[i];
        let xk = k as f64 * self.lattice.delta;
        if x > xk {
            let lim = if which_t { self.front_deriv[i].0 } else { self.front_deriv[i].1 };
            return rows[i][k] + (x - xk) / (fr - xk) * (lim - rows[i][k]);
        }
        let u = (x / self.lattice.delta).clamp(0.0, self.col_count() as f64);
        let j = (u.floor() as usize).min(self.col_count() - 1);
        let s = (u - j as f64).clamp(0.0, 1.0);
        rows[i][j] + s * (rows[i][j + 1] - rows[i][j])
    }

    /// Local-time field access (bilinear between slices; the front knot at
    /// value zero is built into the slice interpolant).
    pub fn v_local(&self, s: f64, x: f64) -> f64 {
        self.v.sample_at(s, x)
    }

    pub fn vt_local(&self, s: f64, x: f64) -> f64 {
        let (i0, i1, th) = self.v.slice_blend(s);
        if i0 == i1 {
            self.deriv_interp_slice(true, i0, x)
        } else {
            (1.0 - th) * self.deriv_interp_slice(true, i0, x)
                + th * self.deriv_interp_slice(true, i1, x)
        }
    }

    pub fn vx_local(&self, s: f64, x: f64) -> f64 {
        let (i0, i1, th) = self.v.slice_blend(s);
        if i0 == i1 {
            self.deriv_interp_slice(false, i0, x)
        } else {
            (1.0 - th) * self.deriv_interp_slice(false, i0, x)
                + th * self.deriv_interp_slice(false, i1, x)
        }
    }

    /// `\iint_R v` for an arbitrary region inside this window's coverage.
    pub fn region_integral(&self, region: &Region) -> f64 {
        region_integral_qg(&self.v, region, false)
    }

    /// Sup-norm fixed-point residual, re-checked with the time quadrature at
    /// half step.
    pub fn fixed_point_residual(&self, refined: bool) -> Result<f64> {
        let parts = TravellingParts::new(&self.data, &self.maps);
        let coef = self.nu * self.nu / 8.0;
        let mut worst = 0.0f64;
        for i in 0..=self.lattice.nt {
            let t = self.lattice.t_local(i);
            for j in 0..=self.v.k_in[i] {
                let x = j as f64 * self.lattice.delta;
                if x >= self.v.front[i] {
                    continue;
                }
                let mut rhs = parts.eval_a(t, x)?;
                if self.nu > 0.0 {
                    let region = self.maps.region(t, x)?;
                    rhs += coef * region_integral_qg(&self.v, &region, refined);
                }
                if let Some(g) = &self.g {
                    let region = self.maps.region(t, x)?;
                    rhs += 0.5 * region_integral_qg(g, &region, refined);
                }
                worst = worst.max((self.v.rows[i][j] - rhs).abs());
            }
        }
        Ok(worst)
    }
}

pub(crate) struct WindowSpec<'a> {
    pub data: WindowData,
    pub front_local: Front,
    pub t_start: f64,
    pub nt: usize,
    pub cfg: &'a SolverConfig,
    /// Transformed forcing in window-local time.
    pub g_fn: Option<&'a (dyn Fn(f64, f64) -> f64 + Sync)>,
    /// Skip the contraction-bound validation (the coupled strip manages its
    /// own window sizes).
    pub skip_bound_check: bool,
}

pub(crate) fn solve_window(spec: WindowSpec<'_>) -> Result<WaveField> {
    let WindowSpec { data, front_local, t_start, nt, cfg, g_fn, skip_bound_check } = spec;
    let delta = cfg.delta;
    let t_len = nt as f64 * delta;
    let ell_start = front_local.ell0();
    if !skip_bound_check {
        let bound = Lattice::window_bound(ell_start, data.z.nu);
        if t_len > bound * (1.0 + 1e-9) {
            return Err(Error::Structural(format!(
                "window length {t_len} exceeds the contraction bound {bound}"
            )));
        }
    }
    let maps = CharMaps::new(front_local)?;
    let nu = data.z.nu;
    let max_ell = (0..=nt).map(|i| maps.ell(i as f64 * delta)).fold(0.0, f64::max);
    let nx = (max_ell / delta).ceil() as usize + 2;
    let lattice = Lattice { delta, t_start, nt, nx };

    let fronts: Vec<f64> = (0..=nt).map(|i| maps.ell(i as f64 * delta)).collect();
    let zeros: Vec<Vec<f64>> = (0..=nt).map(|_| vec![0.0; nx + 1]).collect();
    let mut v = QuadGrid::new(delta, vec![0.0; nt + 1], zeros, fronts.clone());

    // forcing samples and their (constant-in-iteration) region integrals
    let g = g_fn.map(|gf| {
        let rows: Vec<Vec<f64>> = (0..=nt)
            .map(|i| {
                let t = i as f64 * delta;
                (0..=nx).map(|j| gf(t, j as f64 * delta)).collect()
            })
            .collect();
        QuadGrid::new(delta, vec![0.0; nt + 1], rows, vec![f64::INFINITY; nt + 1])
    });
    if let Some(gq) = &g {
        if gq.rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Validation {
                field: "forcing".into(),
                msg: "forcing samples must be finite".into(),
            });
        }
    }

    let parts = TravellingParts::new(&data, &maps);
    // base = A + (1/2) * region integral of g; fixed across Picard sweeps
    let base: Vec<Vec<f64>> = (0..=nt)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * delta;
            let mut row = vec![0.0; nx + 1];
            for (j, item) in row.iter_mut().enumerate().take(v.k_in[i] + 1) {
                let x = j as f64 * delta;
                if x >= fronts[i] {
                    continue;
                }
                let mut val = if i == 0 {
                    data.v0.eval(x.min(data.v0.end()))?
                } else {
                    parts.eval_a(t, x)?
                };
                if let Some(gq) = &g {
                    let region = maps.region(t, x)?;
                    val += 0.5 * region_integral_qg(gq, &region, false);
                }
                *item = val;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    v.rows = base.clone();
    v.rebuild();

    let coef = nu * nu / 8.0;
    let mut increments: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let new_rows: Vec<Vec<f64>> = if nu == 0.0 {
            base.clone()
        } else {
            (0..=nt)
                .into_par_iter()
                .map(|i| {
                    let t = i as f64 * delta;
                    let mut row = vec![0.0; nx + 1];
                    if i == 0 {
                        row.copy_from_slice(&base[0]);
                        return Ok(row);
                    }
                    for (j, item) in row.iter_mut().enumerate().take(v.k_in[i] + 1) {
                        let x = j as f64 * delta;
                        if x >= fronts[i] {
                            continue;
                        }
                        let region = maps.region(t, x)?;
                        *item = base[i][j] + coef * region_integral_qg(&v, &region, false);
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()?
        };
        let mut inc = 0.0f64;
        for (a, b) in new_rows.iter().flatten().zip(v.rows.iter().flatten()) {
            inc = inc.max((a - b).abs());
        }
        v.rows = new_rows;
        v.rebuild();
        increments.push(inc);
        if inc <= cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::Convergence(format!(
                "window at t = {t_start}: increment {inc} after {iterations} iterations"
            )));
        }
    }

    let contraction_estimate = if increments.len() >= 3 {
        increments
            .windows(2)
            .skip(1)
            .filter(|w| w[0] > cfg.tol)
            .map(|w| w[1] / w[0])
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    } else {
        None
    };

    // derivative pass: v_t, v_x at every node plus interior front limits
    let halves: Vec<(Vec<f64>, Vec<f64>, (f64, f64))> = (0..=nt)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * delta;
            let mut row_t = vec![0.0; nx + 1];
            let mut row_x = vec![0.0; nx + 1];
            for j in 0..=v.k_in[i] {
                let x = j as f64 * delta;
                if x >= fronts[i] {
                    continue;
                }
                let (dt, dx) = node_derivative(&parts, &maps, &v, g.as_ref(), nu, t, x, Side::Right)?;
                row_t[j] = dt;
                row_x[j] = dx;
            }
            let fl = front_limit_derivative(&parts, &maps, &v, g.as_ref(), nu, t, fronts[i])?;
            Ok((row_t, row_x, fl))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut vt = Vec::with_capacity(nt + 1);
    let mut vx = Vec::with_capacity(nt + 1);
    let mut front_deriv = Vec::with_capacity(nt + 1);
    for (a, b, c) in halves {
        vt.push(a);
        vx.push(b);
        front_deriv.push(c);
    }

    let report = WindowReport {
        t_start,
        t_end: t_start + t_len,
        ell_start,
        iterations,
        final_increment: *increments.last().unwrap(),
        contraction_estimate,
        restart_trace_defect: 0.0,
    };

    Ok(WaveField { lattice, nu, maps, data, v, vt, vx, g, front_deriv, report })
}

fn node_derivative(
    parts: &TravellingParts<'_>,
    maps: &CharMaps,
    v: &QuadGrid,
    g: Option<&QuadGrid>,
    nu: f64,
    t: f64,
    x: f64,
    side: Side,
) -> Result<(f64, f64)> {
    let (mut dt, mut dx) = parts.eval_a_deriv(t, x, side)?;
    if nu > 0.0 {
        let (ht, hx) = h_derivatives_qg(v, maps, t, x, side)?;
        let c = nu * nu / 8.0;
        dt += c * ht;
        dx += c * hx;
    }
    if let Some(gq) = g {
        let (ht, hx) = h_derivatives_qg(gq, maps, t, x, side)?;
        dt += 0.5 * ht;
        dx += 0.5 * hx;
    }
    Ok((dt, dx))
}

/// Interior one-sided derivatives at the exact front position.
fn front_limit_derivative(
    parts: &TravellingParts<'_>,
    maps: &CharMaps,
    v: &QuadGrid,
    g: Option<&QuadGrid>,
    nu: f64,
    t: f64,
    front_x: f64,
) -> Result<(f64, f64)> {
    // stay a hair inside so the zone classification picks the film interior
    let eps = 1e-9 * (1.0 + front_x);
    node_derivative(parts, maps, v, g, nu, t, (front_x - eps).max(0.0), Side::Left)
}

/// Restart data read off a window's final slice: values and derivative
/// traces out to the exact front position.
pub(crate) fn restart_data(field: &WaveField, w_global: &SampledFunction) -> Result<WindowData> {
    let i = field.lattice.nt;
    let delta = field.lattice.delta;
    let ell_end = field.v.front[i];
    let k = field.v.k_in[i];
    let xk = k as f64 * delta;
    let (vt_front, vx_front) = field.front_deriv[i];

    let mut v0 = SampledFunction::new(0.0, xk, field.v.rows[i][..=k].to_vec())?
        .with_derivative_samples(field.vx[i][..=k].to_vec())?;
    if ell_end - xk > 1e-9 * (1.0 + ell_end) {
        v0 = v0.with_tail(ell_end, 0.0)?;
    }
    let mut v1 = SampledFunction::new(0.0, xk, field.vt[i][..=k].to_vec())?;
    if ell_end - xk > 1e-9 * (1.0 + ell_end) {
        v1 = v1.with_tail(ell_end, vt_front)?;
    }
    Ok(WindowData {
        ell0: ell_end,
        v0,
        v1,
        z: crate::dalembert::BoundaryTrace {
            w: w_global.clone(),
            nu: field.nu,
            t_offset: field.lattice.t_end(),
        },
        dv0_front: vx_front,
        v1_front: vt_front,
    })
}

/// Stitched multi-window solution with global-time accessors.
pub struct WaveSolution {
    pub nu: f64,
    pub front: Front,
    pub windows: Vec<WaveField>,
    pub report: SolveReport,
}

impl WaveSolution {
    pub fn end_time(&self) -> f64 {
        self.report.end_time
    }

    pub(crate) fn window_index(&self, t: f64) -> Result<usize> {
        let end = self.end_time();
        if t < -1e-12 || t > end * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Domain(format!("time {t} outside the solved range [0, {end}]")));
        }
        let mut idx = 0;
        for (k, w) in self.windows.iter().enumerate() {
            if t >= w.lattice.t_start - 1e-12 {
                idx = k;
            }
        }
        Ok(idx)
    }

    pub fn v(&self, t: f64, x: f64) -> Result<f64> {
        let k = self.window_index(t)?;
        let w = &self.windows[k];
        Ok(w.v_local(t - w.lattice.t_start, x))
    }

    pub fn vt(&self, t: f64, x: f64) -> Result<f64> {
        let k = self.window_index(t)?;
        let w = &self.windows[k];
        Ok(w.vt_local(t - w.lattice.t_start, x))
    }

    pub fn vx(&self, t: f64, x: f64) -> Result<f64> {
        let k = self.window_index(t)?;
        let w = &self.windows[k];
        Ok(w.vx_local(t - w.lattice.t_start, x))
    }

    /// Damped displacement `u = e^{-nu t/2} v`.
    pub fn u(&self, t: f64, x: f64) -> Result<f64> {
        Ok((-0.5 * self.nu * t).exp() * self.v(t, x)?)
    }

    /// `u_t = e^{-nu t/2} (v_t - (nu/2) v)`.
    pub fn ut(&self, t: f64, x: f64) -> Result<f64> {
        let e = (-0.5 * self.nu * t).exp();
        Ok(e * (self.vt(t, x)? - 0.5 * self.nu * self.v(t, x)?))
    }

    pub fn ux(&self, t: f64, x: f64) -> Result<f64> {
        Ok((-0.5 * self.nu * t).exp() * self.vx(t, x)?)
    }

    /// All lattice times up to the solved end (window boundaries deduplicated).
    pub fn lattice_times(&self) -> Vec<f64> {
        let mut ts = Vec::new();
        for w in &self.windows {
            let start = if ts.is_empty() { 0 } else { 1 };
            for i in start..=w.lattice.nt {
                ts.push(w.lattice.t_start + w.lattice.t_local(i));
            }
        }
        if ts.is_empty() {
            ts.push(0.0);
        }
        ts
    }
}

/// Chained prescribed-front solve up to `min(horizon, sonic time)`.
pub fn solve_prescribed(
    data: &ProblemData,
    front: &Front,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<WaveSolution> {
    let compat = crate::dalembert::check_compatibility(data, 0, None, cfg.compat_tol)?;
    if !compat.passed() {
        let (cond, mag) = &compat.violations[0];
        return Err(Error::Validation {
            field: "initial data".into(),
            msg: format!("compatibility violated: {cond} off by {mag:.3e}"),
        });
    }
    let global_maps = CharMaps::new(front.clone())?;
    let t_star = global_maps.sonic_time();
    let t_end = horizon.min(t_star);
    let truncated = if t_star < horizon { Some(t_star) } else { None };

    let mut windows: Vec<WaveField> = Vec::new();
    let mut report = SolveReport { windows: vec![], end_time: 0.0, truncated_at_sonic: truncated };
    let mut t0 = 0.0f64;
    let mut wdata = WindowData::from_problem(data)?;
    let g_fn_global = data.forcing.as_ref().map(|_| ());

    while t0 < t_end - 0.5 * cfg.delta {
        let ell_here = front.ell(t0);
        let bound = cfg.window_safety * Lattice::window_bound(ell_here, data.nu);
        let remaining = t_end - t0;
        let nt_bound = ((bound / cfg.delta) + 1e-9).floor() as usize;
        let nt_remaining = ((remaining / cfg.delta) + 1e-9).floor() as usize;
        let nt = nt_bound.min(nt_remaining.max(1)).max(1);
        let t_len = nt as f64 * cfg.delta;

        let front_local = front.shifted(t0, t_len)?;
        let t0c = t0;
        let gshift = move |s: f64, x: f64, d: &ProblemData| d.g(t0c + s, x);
        let g_closure: Option<Box<dyn Fn(f64, f64) -> f64 + Sync>> = if g_fn_global.is_some() {
            let d = data.clone();
            Some(Box::new(move |s, x| gshift(s, x, &d)))
        } else {
            None
        };
        let mut field = solve_window(WindowSpec {
            data: wdata,
            front_local,
            t_start: t0,
            nt,
            cfg,
            g_fn: g_closure.as_deref(),
            skip_bound_check: false,
        })?;

        // restart data off the final slice + trace defect bookkeeping
        let next = restart_data(&field, &data.w)?;
        let z_next = next.z.eval(0.0)?;
        let defect = (next.v0.eval(0.0)? - z_next)
            .abs()
            .max(next.v0.eval(next.v0.end())?.abs());
        field.report.restart_trace_defect = defect;
        report.windows.push(field.report.clone());
        windows.push(field);
        t0 += t_len;
        report.end_time = t0;
        wdata = next;
        if defect > 1e-3 * (1.0 + z_next.abs()) {
            return Err(Error::Convergence(format!(
                "restart trace defect {defect:.3e} at t = {t0}"
            )));
        }
    }

    if windows.is_empty() {
        // degenerate horizon: still produce the initial slice
        let nt = 1;
        let front_local = front.shifted(0.0, cfg.delta)?;
        let field = solve_window(WindowSpec {
            data: wdata,
            front_local,
            t_start: 0.0,
            nt,
            cfg,
            g_fn: None,
            skip_bound_check: false,
        })?;
        report.windows.push(field.report.clone());
        report.end_time = field.lattice.t_end();
        windows.push(field);
    }

    Ok(WaveSolution { nu: data.nu, front: front.clone(), windows, report })
}

/// Direct damped-level solve via `u = A_hat - (nu/2) \iint u_t`, iterating on
/// the velocity field. Exists as an independent consistency route; the
/// primary path solves for `v`.
pub struct URouteSolution {
    pub(crate) windows: Vec<(Lattice, QuadGrid)>,
}

impl URouteSolution {
    pub fn u(&self, t: f64, x: f64) -> f64 {
        let mut idx = 0;
        for (k, (lat, _)) in self.windows.iter().enumerate() {
            if t >= lat.t_start - 1e-12 {
                idx = k;
            }
        }
        let (lat, qg) = &self.windows[idx];
        qg.sample_at(t - lat.t_start, x)
    }
}

pub fn solve_prescribed_u_route(
    data: &ProblemData,
    front: &Front,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<URouteSolution> {
    if data.forcing.is_some() {
        return Err(Error::Structural(
            "the velocity-route solver does not support forcing".into(),
        ));
    }
    let global_maps = CharMaps::new(front.clone())?;
    let t_end = horizon.min(global_maps.sonic_time());
    let nu = data.nu;
    let delta = cfg.delta;

    // damped-level window data: same travelling-part formulas with the raw
    // boundary load in place of the transformed trace
    let mut wdata = WindowData {
        ell0: data.ell0,
        v0: data.u0.clone(),
        v1: data.u1.clone(),
        z: crate::dalembert::BoundaryTrace { w: data.w.clone(), nu: 0.0, t_offset: 0.0 },
        dv0_front: data.u0.deriv_eval(data.ell0, Side::Left)?,
        v1_front: data.u1.eval(data.ell0)?,
    };

    let mut windows = Vec::new();
    let mut t0 = 0.0f64;
    while t0 < t_end - 0.5 * delta {
        let ell_here = front.ell(t0);
        let mut bound = cfg.window_safety * Lattice::window_bound(ell_here, nu);
        if nu > 0.0 {
            bound = bound.min(0.45 / nu);
        }
        let remaining = t_end - t0;
        let nt_bound = ((bound / delta) + 1e-9).floor() as usize;
        let nt_remaining = ((remaining / delta) + 1e-9).floor() as usize;
        let nt = nt_bound.min(nt_remaining.max(1)).max(1);
        let t_len = nt as f64 * delta;

        let front_local = front.shifted(t0, t_len)?;
        let maps = CharMaps::new(front_local)?;
        let parts = TravellingParts::new(&wdata, &maps);
        let max_ell = (0..=nt).map(|i| maps.ell(i as f64 * delta)).fold(0.0, f64::max);
        let nx = (max_ell / delta).ceil() as usize + 2;
        let fronts: Vec<f64> = (0..=nt).map(|i| maps.ell(i as f64 * delta)).collect();

        // A_hat values and derivative traces
        let mut a_grid = vec![vec![0.0; nx + 1]; nt + 1];
        let mut at_grid = vec![vec![0.0; nx + 1]; nt + 1];
        for i in 0..=nt {
            let t = i as f64 * delta;
            for j in 0..=nx {
                let x = j as f64 * delta;
                if x >= fronts[i] {
                    continue;
                }
                a_grid[i][j] = parts.eval_a(t, x)?;
                let (dt, _) = parts.eval_a_deriv(t, x, Side::Right)?;
                at_grid[i][j] = dt;
            }
        }

        let mut ut = QuadGrid::new(delta, vec![0.0; nt + 1], at_grid.clone(), fronts.clone());
        let coef = -0.5 * nu;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let new_rows: Vec<Vec<f64>> = if nu == 0.0 {
                at_grid.clone()
            } else {
                (0..=nt)
                    .into_par_iter()
                    .map(|i| {
                        let t = i as f64 * delta;
                        let mut row = vec![0.0; nx + 1];
                        for (j, item) in row.iter_mut().enumerate().take(ut.k_in[i] + 1) {
                            let x = j as f64 * delta;
                            if x >= fronts[i] {
                                continue;
                            }
                            let (ht, _) = h_derivatives_qg(&ut, &maps, t, x, Side::Right)?;
                            *item = at_grid[i][j] + coef * ht;
                        }
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let mut inc = 0.0f64;
            for (a, b) in new_rows.iter().flatten().zip(ut.rows.iter().flatten()) {
                inc = inc.max((a - b).abs());
            }
            ut.rows = new_rows;
            ut.rebuild();
            if inc <= cfg.tol {
                break;
            }
            if iterations >= cfg.max_iter {
                return Err(Error::Convergence(format!(
                    "velocity-route window at t = {t0} did not converge (increment {inc})"
                )));
            }
        }

        // displacement and slope fields from the converged velocity
        let mut u_rows = vec![vec![0.0; nx + 1]; nt + 1];
        let mut ux_rows = vec![vec![0.0; nx + 1]; nt + 1];
        for i in 0..=nt {
            let t = i as f64 * delta;
            for j in 0..=ut.k_in[i] {
                let x = j as f64 * delta;
                if x >= fronts[i] {
                    continue;
                }
                let mut val = a_grid[i][j];
                let mut dxv = parts.eval_a_deriv(t, x, Side::Right)?.1;
                if nu > 0.0 {
                    let region = maps.region(t, x)?;
                    val += coef * region_integral_qg(&ut, &region, false);
                    let (_, hx) = h_derivatives_qg(&ut, &maps, t, x, Side::Right)?;
                    dxv += coef * hx;
                }
                u_rows[i][j] = val;
                ux_rows[i][j] = dxv;
            }
        }
        let u_qg = QuadGrid::new(delta, vec![0.0; nt + 1], u_rows, fronts.clone());

        // restart off the last slice
        let i = nt;
        let k = u_qg.k_in[i];
        let xk = k as f64 * delta;
        let ell_end = fronts[i];
        let mut u0n = SampledFunction::new(0.0, xk, u_qg.rows[i][..=k].to_vec())?
            .with_derivative_samples(ux_rows[i][..=k].to_vec())?;
        let mut u1n = SampledFunction::new(0.0, xk, ut.rows[i][..=k].to_vec())?;
        if ell_end - xk > 1e-9 * (1.0 + ell_end) {
            u0n = u0n.with_tail(ell_end, 0.0)?;
            u1n = u1n.with_tail(ell_end, ut.sample(i, ell_end - 1e-9))?;
        }
        let lat = Lattice { delta, t_start: t0, nt, nx };
        windows.push((lat, u_qg));

        wdata = WindowData {
            ell0: ell_end,
            v0: u0n,
            v1: u1n,
            z: crate::dalembert::BoundaryTrace {
                w: data.w.clone(),
                nu: 0.0,
                t_offset: t0 + t_len,
            },
            dv0_front: ux_rows[i][k],
            v1_front: ut.rows[i][k],
        };
        t0 += t_len;
    }

    Ok(URouteSolution { windows })
}
