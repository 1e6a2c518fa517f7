//! Energies, external work, dynamic energy release rate and the
//! energy-dissipation balance residual.
//!
//! Internal energy and friction dissipation are slice/space-time trapezoid
//! sums over the cached derivative lattice. The external work and the
//! release rate use the characteristic-line formulas anchored at the most
//! recent window start, which is how they extend past the first window.

use crate::dalembert::ProblemData;
use crate::duhamel::{line_integral_qg, WaveSolution};
use crate::error::{Error, Result};
use crate::griffith::Toughness;
use crate::pwlinear::Side;

/// `u`-level slice samples at a given time: values on the lattice columns
/// plus the interior limit at the exact front position.
struct Slice {
    delta: f64,
    front_x: f64,
    ut: Vec<f64>,
    ux: Vec<f64>,
    ut_front: f64,
    ux_front: f64,
}

fn slice_at(sol: &WaveSolution, t: f64) -> Result<Slice> {
    let k = sol.window_index(t)?;
    let w = &sol.windows[k];
    let s = t - w.lattice.t_start;
    let delta = w.lattice.delta;
    let front_x = sol.front.ell(t);
    let scale = (-0.5 * sol.nu * t).exp();
    let n_in = ((front_x / delta).ceil() as usize).saturating_sub(1).min(w.lattice.nx);
    let mut ut = Vec::with_capacity(n_in + 1);
    let mut ux = Vec::with_capacity(n_in + 1);
    for j in 0..=n_in {
        let x = j as f64 * delta;
        if x >= front_x {
            ut.push(0.0);
            ux.push(0.0);
            continue;
        }
        let vt = w.vt_local(s, x);
        let vx = w.vx_local(s, x);
        let v = w.v_local(s, x);
        ut.push(scale * (vt - 0.5 * sol.nu * v));
        ux.push(scale * vx);
    }
    // interior one-sided limits at the front (v itself vanishes there)
    let (i0, i1, th) = {
        let n = w.front_deriv.len();
        let u = (s / delta).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 1);
        let th = (u - i as f64).clamp(0.0, 1.0);
        if th == 0.0 || i + 1 >= n {
            (i, i, 0.0)
        } else {
            (i, i + 1, th)
        }
    };
    let blend =
        |a: (f64, f64), b: (f64, f64)| ((1.0 - th) * a.0 + th * b.0, (1.0 - th) * a.1 + th * b.1);
    let (vt_f, vx_f) = blend(w.front_deriv[i0], w.front_deriv[i1]);
    Ok(Slice {
        delta,
        front_x,
        ut,
        ux,
        ut_front: scale * vt_f,
        ux_front: scale * vx_f,
    })
}

fn slice_trapz(s: &Slice, f: impl Fn(f64, f64) -> f64) -> f64 {
    let n = s.ut.len() - 1;
    let mut acc = 0.0;
    for j in 0..n {
        acc += 0.5 * (f(s.ut[j], s.ux[j]) + f(s.ut[j + 1], s.ux[j + 1])) * s.delta;
    }
    let xn = n as f64 * s.delta;
    if s.front_x > xn {
        acc += 0.5
            * (f(s.ut[n], s.ux[n]) + f(s.ut_front, s.ux_front))
            * (s.front_x - xn);
    }
    acc
}

/// Internal energy `1/2 \int_0^{ell(t)} (u_t^2 + u_x^2) dx`.
pub fn internal_energy(sol: &WaveSolution, t: f64) -> Result<f64> {
    let s = slice_at(sol, t)?;
    Ok(slice_trapz(&s, |ut, ux| 0.5 * (ut * ut + ux * ux)))
}

/// Friction dissipation `nu \int_0^t \int_0^{ell} u_t^2`, cumulative trapezoid
/// over the lattice times.
pub fn dissipated_energy(sol: &WaveSolution, t: f64) -> Result<f64> {
    if sol.nu == 0.0 {
        return Ok(0.0);
    }
    cumulative(sol, t, |tau| {
        let s = slice_at(sol, tau)?;
        Ok(sol.nu * slice_trapz(&s, |ut, _| ut * ut))
    })
}

/// Work done by the forcing term, `\int_0^t \int_0^{ell} f u_t`.
pub fn forcing_work(sol: &WaveSolution, data: &ProblemData, t: f64) -> Result<f64> {
    if data.forcing.is_none() {
        return Ok(0.0);
    }
    cumulative(sol, t, |tau| {
        let s = slice_at(sol, tau)?;
        let f = data.forcing.as_ref().unwrap();
        let n = s.ut.len() - 1;
        let mut acc = 0.0;
        for j in 0..n {
            let x0 = j as f64 * s.delta;
            let x1 = x0 + s.delta;
            acc += 0.5 * (f.eval(tau, x0) * s.ut[j] + f.eval(tau, x1) * s.ut[j + 1]) * s.delta;
        }
        let xn = n as f64 * s.delta;
        if s.front_x > xn {
            acc += 0.5
                * (f.eval(tau, xn) * s.ut[n] + f.eval(tau, s.front_x) * s.ut_front)
                * (s.front_x - xn);
        }
        Ok(acc)
    })
}

fn cumulative(
    sol: &WaveSolution,
    t: f64,
    integrand: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut prev_tau = 0.0;
    let mut prev_f = integrand(0.0)?;
    for tau in sol.lattice_times().into_iter().skip(1) {
        let tau_c = tau.min(t);
        if tau_c <= prev_tau {
            break;
        }
        let f = integrand(tau_c)?;
        acc += 0.5 * (prev_f + f) * (tau_c - prev_tau);
        prev_tau = tau_c;
        prev_f = f;
        if tau_c >= t {
            break;
        }
    }
    Ok(acc)
}

/// Instantaneous power fed through the loaded end, window-anchored:
/// `wdot [ wdot + (nu/2) w - e^{-nu t/2} ((v_x + v_t)(anchor) + (nu^2/4)
/// \int v + \int g along the incoming characteristic) ]`.
fn boundary_power(sol: &WaveSolution, data: &ProblemData, t: f64) -> Result<f64> {
    let wdot = data.w.deriv_eval(t, Side::Right)?;
    if wdot == 0.0 {
        return Ok(0.0);
    }
    let k = sol.window_index(t)?;
    let w = &sol.windows[k];
    let s = t - w.lattice.t_start;
    let wd = &w.data;
    let mut c = wd.dv0(s, Side::Right)? + wd.v1_at(s)?;
    if sol.nu > 0.0 {
        c += 0.25 * sol.nu * sol.nu * line_integral_qg(&w.v, 0.0, s, |tau| s - tau);
    }
    if let Some(g) = &w.g {
        c += line_integral_qg(g, 0.0, s, |tau| s - tau);
    }
    let wval = data.w.eval(t)?;
    Ok(wdot * (wdot + 0.5 * sol.nu * wval - (-0.5 * sol.nu * t).exp() * c))
}

/// Work of the external loading up to `t`.
pub fn external_work(sol: &WaveSolution, data: &ProblemData, t: f64) -> Result<f64> {
    cumulative(sol, t, |tau| boundary_power(sol, data, tau))
}

/// Dynamic energy release rate at front speed zero, by the characteristic
/// integral anchored at the containing window's start slice.
pub fn release_rate_g0(sol: &WaveSolution, t: f64) -> Result<f64> {
    let k = sol.window_index(t)?;
    let w = &sol.windows[k];
    let s = t - w.lattice.t_start;
    let wd = &w.data;
    let ell_t = sol.front.ell(t);
    let sigma_anchor = ell_t - s;
    let mut b = wd.dv0(sigma_anchor, Side::Left)? - wd.v1_at(sigma_anchor)?;
    if sol.nu > 0.0 {
        b -= 0.25 * sol.nu * sol.nu
            * line_integral_qg(&w.v, 0.0, s, |tau| tau - s + ell_t);
    }
    if let Some(g) = &w.g {
        b -= line_integral_qg(g, 0.0, s, |tau| tau - s + ell_t);
    }
    Ok(0.5 * (-sol.nu * t).exp() * b * b)
}

/// `G_alpha = (1-alpha)/(1+alpha) G_0` for a front speed `alpha` in `[0, 1)`.
pub fn release_rate_for_speed(g0: f64, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("front speed {alpha} outside [0, 1)")));
    }
    if g0 < 0.0 {
        return Err(Error::Domain(format!("release rate {g0} must be nonnegative")));
    }
    Ok((1.0 - alpha) / (1.0 + alpha) * g0)
}

/// Horizontal displacement `h(t,x) = 1/2 \int_x^{ell(t)} u_x^2`.
pub fn horizontal_displacement(sol: &WaveSolution, t: f64, x: f64) -> Result<f64> {
    let s = slice_at(sol, t)?;
    if x >= s.front_x {
        return Ok(0.0);
    }
    let full = slice_trapz(&s, |_, ux| 0.5 * ux * ux);
    // subtract the part below x, trapezoid with a partial first cell
    let n = s.ut.len() - 1;
    let j_full = ((x / s.delta).floor() as usize).min(n);
    let mut below = 0.0;
    for j in 0..j_full {
        below += 0.25 * (s.ux[j] * s.ux[j] + s.ux[j + 1] * s.ux[j + 1]) * s.delta;
    }
    let xj = j_full as f64 * s.delta;
    if x > xj && j_full < n {
        let frac = (x - xj) / s.delta;
        let ux_here = s.ux[j_full] + frac * (s.ux[j_full + 1] - s.ux[j_full]);
        below += 0.25 * (s.ux[j_full] * s.ux[j_full] + ux_here * ux_here) * (x - xj);
    }
    Ok(full - below)
}

/// Time series of every energy quantity at the solution's lattice times.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub internal: Vec<f64>,
    pub dissipated: Vec<f64>,
    pub total: Vec<f64>,
    pub work: Vec<f64>,
    pub forcing_work: Vec<f64>,
    pub g0: Vec<f64>,
    pub debond: Vec<f64>,
    pub balance_residual: Vec<f64>,
}

impl EnergyTrace {
    pub fn max_balance_residual(&self) -> f64 {
        self.balance_residual.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

/// Builds the full trace: `residual(t) = T(t) + \int kappa d ell - T(0) - W(t)`
/// with `T = internal + dissipated - forcing work`. A prescribed run without
/// a toughness model has a zero debonding term.
pub fn energy_trace(
    sol: &WaveSolution,
    data: &ProblemData,
    kappa: Option<&Toughness>,
) -> Result<EnergyTrace> {
    let times = sol.lattice_times();
    let n = times.len();
    let mut internal = Vec::with_capacity(n);
    let mut g0 = Vec::with_capacity(n);
    let mut debond = Vec::with_capacity(n);
    let mut dissipated = Vec::with_capacity(n);
    let mut work = Vec::with_capacity(n);
    let mut fwork = Vec::with_capacity(n);

    let has_forcing = data.forcing.is_some();
    let mut acc_a = 0.0;
    let mut acc_w = 0.0;
    let mut acc_f = 0.0;
    let mut prev: Option<(f64, f64, f64, f64)> = None; // (t, a-rate, w-rate, f-rate)
    for &t in &times {
        let s = slice_at(sol, t)?;
        internal.push(slice_trapz(&s, |ut, ux| 0.5 * (ut * ut + ux * ux)));
        let a_rate =
            if sol.nu > 0.0 { sol.nu * slice_trapz(&s, |ut, _| ut * ut) } else { 0.0 };
        let w_rate = boundary_power(sol, data, t)?;
        let f_rate = if has_forcing {
            let f = data.forcing.as_ref().unwrap();
            let n_cells = s.ut.len() - 1;
            let mut acc = 0.0;
            for j in 0..n_cells {
                let x0 = j as f64 * s.delta;
                acc += 0.5
                    * (f.eval(t, x0) * s.ut[j] + f.eval(t, x0 + s.delta) * s.ut[j + 1])
                    * s.delta;
            }
            let xn = n_cells as f64 * s.delta;
            if s.front_x > xn {
                acc += 0.5
                    * (f.eval(t, xn) * s.ut[n_cells] + f.eval(t, s.front_x) * s.ut_front)
                    * (s.front_x - xn);
            }
            acc
        } else {
            0.0
        };
        if let Some((tp, ap, wp, fp)) = prev {
            let dt = t - tp;
            acc_a += 0.5 * (ap + a_rate) * dt;
            acc_w += 0.5 * (wp + w_rate) * dt;
            acc_f += 0.5 * (fp + f_rate) * dt;
        }
        prev = Some((t, a_rate, w_rate, f_rate));
        dissipated.push(acc_a);
        work.push(acc_w);
        fwork.push(acc_f);
        g0.push(release_rate_g0(sol, t)?);
        debond.push(match kappa {
            Some(k) => k.debond_dissipation(&sol.front, t)?,
            None => 0.0,
        });
    }

    let total: Vec<f64> = (0..n)
        .map(|i| internal[i] + dissipated[i] - fwork[i])
        .collect();
    let t0 = total[0];
    let balance_residual: Vec<f64> =
        (0..n).map(|i| total[i] + debond[i] - t0 - work[i]).collect();
    Ok(EnergyTrace {
        times,
        internal,
        dissipated,
        total,
        work,
        forcing_work: fwork,
        g0,
        debond,
        balance_residual,
    })
}

/// Energy-balance residual at a single time.
pub fn balance_residual(
    sol: &WaveSolution,
    data: &ProblemData,
    kappa: Option<&Toughness>,
    t: f64,
) -> Result<f64> {
    let e = internal_energy(sol, t)?;
    let a = dissipated_energy(sol, t)?;
    let f = forcing_work(sol, data, t)?;
    let e0 = internal_energy(sol, 0.0)?;
    let w = external_work(sol, data, t)?;
    let d = match kappa {
        Some(k) => k.debond_dissipation(&sol.front, t)?,
        None => 0.0,
    };
    Ok(e + a - f + d - e0 - w)
}

/// Rate of the total energy by the damped-level characteristic formula
/// (window-anchored). Forcing is not covered by this route.
pub fn total_energy_rate_u_form(sol: &WaveSolution, data: &ProblemData, t: f64) -> Result<f64> {
    let k = sol.window_index(t)?;
    let w = &sol.windows[k];
    let t0 = w.lattice.t_start;
    let s = t - t0;
    let wd = &w.data;
    let nu = sol.nu;
    let e0 = (-0.5 * nu * t0).exp();
    let ell_t = sol.front.ell(t);

    // u-level anchor traces from the window's transformed data
    let du = |x: f64, side: Side| -> Result<f64> {
        // u_x - u_t = e^{-nu t0/2} (v_x - v_t + (nu/2) v)
        Ok(e0 * (wd.dv0(x, side)? - wd.v1_at(x)? + 0.5 * nu * wd.v0.eval(x.min(wd.v0.end()))?))
    };
    let cu = |x: f64, side: Side| -> Result<f64> {
        Ok(e0 * (wd.dv0(x, side)? + wd.v1_at(x)? - 0.5 * nu * wd.v0.eval(x.min(wd.v0.end()))?))
    };

    let trapz_ut = |sigma: &dyn Fn(f64) -> f64| -> Result<f64> {
        let delta = w.lattice.delta;
        let n = (s / delta + 1e-9).floor() as usize;
        let mut taus: Vec<f64> = (0..=n).map(|i| i as f64 * delta).collect();
        if *taus.last().unwrap() < s - 1e-13 {
            taus.push(s);
        }
        let ut_at = |tau: f64, x: f64| -> f64 {
            let tg = t0 + tau;
            let sc = (-0.5 * nu * tg).exp();
            sc * (w.vt_local(tau, x) - 0.5 * nu * w.v_local(tau, x))
        };
        let mut acc = 0.0;
        for pair in taus.windows(2) {
            let f0 = ut_at(pair[0], sigma(pair[0]));
            let f1 = ut_at(pair[1], sigma(pair[1]));
            acc += 0.5 * (f0 + f1) * (pair[1] - pair[0]);
        }
        Ok(acc)
    };

    let ldot = sol.front.slope(t, Side::Right);
    let sigma_anchor = ell_t - s;
    let b = du(sigma_anchor, Side::Left)? + nu * trapz_ut(&|tau| tau - s + ell_t)?;
    let front_term = -0.5 * ldot * (1.0 - ldot) / (1.0 + ldot) * b * b;

    let wdot = data.w.deriv_eval(t, Side::Right)?;
    let c = cu(s, Side::Right)? - nu * trapz_ut(&|tau| s - tau)?;
    Ok(front_term + wdot * (wdot - c))
}

/// Rate of the total energy by the transformed-level formula; algebraically
/// the same quantity as the damped-level route.
pub fn total_energy_rate_v_form(sol: &WaveSolution, data: &ProblemData, t: f64) -> Result<f64> {
    let k = sol.window_index(t)?;
    let w = &sol.windows[k];
    let s = t - w.lattice.t_start;
    let wd = &w.data;
    let nu = sol.nu;
    let ell_t = sol.front.ell(t);
    let sigma_anchor = ell_t - s;

    let mut b = wd.dv0(sigma_anchor, Side::Left)? - wd.v1_at(sigma_anchor)?;
    if nu > 0.0 {
        b -= 0.25 * nu * nu * line_integral_qg(&w.v, 0.0, s, |tau| tau - s + ell_t);
    }
    let ldot = sol.front.slope(t, Side::Right);
    let front_term = -0.5 * ldot * (1.0 - ldot) / (1.0 + ldot) * (-nu * t).exp() * b * b;
    Ok(front_term + boundary_power(sol, data, t)?)
}
