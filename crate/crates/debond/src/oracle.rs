//! Independent finite-difference reference solver for the prescribed-front
//! problem, used to cross-validate the semi-analytic path.
//!
//! The moving domain is mapped onto the unit strip by `y = x / ell(t)`, which
//! turns the equation into a variable-coefficient wave equation with an
//! advection/stretch part driven by the front motion. An explicit leapfrog
//! scheme integrates it, damping centered in time; the mixed `U_ty` term uses
//! a second-order backward difference so the scheme stays explicit.

use crate::dalembert::ProblemData;
use crate::error::{Error, Result};
use crate::geometry::Front;
use crate::pwlinear::Side;

#[derive(Debug, Clone, Copy)]
pub struct FdmGrid {
    pub h: f64,
    pub k: f64,
    pub ny: usize,
}

impl FdmGrid {
    /// Builds a grid with `ny` cells on the unit strip and a time step
    /// satisfying both the nominal margin `k <= 0.9 h` and the transformed
    /// equation's characteristic-speed bound.
    pub fn new(ny: usize, front: &Front, horizon: f64) -> Result<Self> {
        if ny < 4 {
            return Err(Error::Structural("FDM grid needs at least 4 cells".into()));
        }
        let h = 1.0 / ny as f64;
        let mut speed_max = 1.0 / front.ell0();
        let mut t = 0.0;
        while t <= horizon {
            let ell = front.ell(t);
            let ldot = front.slope(t, Side::Right);
            speed_max = speed_max.max((1.0 + ldot) / ell);
            t += horizon.max(1e-9) / 64.0;
        }
        let k = (0.9 * h).min(0.9 * h / speed_max);
        Ok(Self { h, k, ny })
    }
}

/// Solution on the unit strip with pullback to physical coordinates.
pub struct FdmField {
    pub grid: FdmGrid,
    pub front: Front,
    pub times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl FdmField {
    /// `u(t, x)` by bilinear interpolation in `(t, y)`; zero at and past the
    /// front.
    pub fn u(&self, t: f64, x: f64) -> f64 {
        let ell = self.front.ell(t);
        if x >= ell || x < 0.0 {
            return 0.0;
        }
        let y = x / ell;
        let n = self.times.len();
        let k = self.grid.k;
        let it = ((t / k).floor() as usize).min(n.saturating_sub(2));
        let th = ((t - self.times[it]) / k).clamp(0.0, 1.0);
        let eval_row = |row: &Vec<f64>| -> f64 {
            let u = (y / self.grid.h).clamp(0.0, self.grid.ny as f64);
            let j = (u.floor() as usize).min(self.grid.ny - 1);
            let s = (u - j as f64).clamp(0.0, 1.0);
            row[j] + s * (row[j + 1] - row[j])
        };
        (1.0 - th) * eval_row(&self.rows[it]) + th * eval_row(&self.rows[it + 1])
    }

    /// Discrete internal energy at step `n` (central time differences), for
    /// the dissipation checks.
    pub fn internal_energy(&self, n: usize) -> f64 {
        if n == 0 || n + 1 >= self.times.len() {
            return f64::NAN;
        }
        let t = self.times[n];
        let ell = self.front.ell(t);
        let ldot = self.front.slope(t, Side::Right);
        let h = self.grid.h;
        let k = self.grid.k;
        let ny = self.grid.ny;
        let mut acc = 0.0;
        for j in 0..=ny {
            let y = j as f64 * h;
            let uy = if j == 0 {
                (self.rows[n][1] - self.rows[n][0]) / h
            } else if j == ny {
                (self.rows[n][ny] - self.rows[n][ny - 1]) / h
            } else {
                (self.rows[n][j + 1] - self.rows[n][j - 1]) / (2.0 * h)
            };
            let ut_strip = (self.rows[n + 1][j] - self.rows[n - 1][j]) / (2.0 * k);
            let ut = ut_strip - uy * y * ldot / ell;
            let ux = uy / ell;
            let w = if j == 0 || j == ny { 0.5 } else { 1.0 };
            acc += w * 0.5 * (ut * ut + ux * ux) * h * ell;
        }
        acc
    }
}

/// Explicit leapfrog solve of the prescribed-front problem on the
/// front-fitted strip.
pub fn fdm_solve_prescribed(
    data: &ProblemData,
    front: &Front,
    horizon: f64,
    grid: FdmGrid,
) -> Result<FdmField> {
    if grid.k > 0.9 * grid.h * (1.0 + 1e-12) {
        return Err(Error::Structural(format!(
            "time step {} violates the margin 0.9 h = {}",
            grid.k,
            0.9 * grid.h
        )));
    }
    let cap = 1.0 - 1e-9;
    let mut t_probe = 0.0;
    while t_probe <= horizon {
        if front.slope(t_probe, Side::Right) > cap {
            return Err(Error::Structural(
                "front-fitted map needs a strictly subsonic front".into(),
            ));
        }
        t_probe += horizon.max(1e-9) / 128.0;
    }

    let ny = grid.ny;
    let h = grid.h;
    let k = grid.k;
    let nu = data.nu;
    let n_steps = (horizon / k).ceil() as usize;

    let coeffs = |t: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let ell = front.ell(t);
        let ldot = front.slope(t, Side::Right);
        let mut a = vec![0.0; ny + 1];
        let mut b = vec![0.0; ny + 1];
        let mut c = vec![0.0; ny + 1];
        for (j, ((aj, bj), cj)) in a.iter_mut().zip(&mut b).zip(&mut c).enumerate() {
            let y = j as f64 * h;
            let yt = -y * ldot / ell;
            *aj = 1.0 / (ell * ell) - yt * yt;
            *bj = -2.0 * yt;
            *cj = -(2.0 * y * (ldot / ell) * (ldot / ell)) - nu * yt;
        }
        (a, b, c)
    };

    let uy_of = |row: &[f64], j: usize| -> f64 {
        if j == 0 {
            (row[1] - row[0]) / h
        } else if j == ny {
            (row[ny] - row[ny - 1]) / h
        } else {
            (row[j + 1] - row[j - 1]) / (2.0 * h)
        }
    };

    // initial slice and its time derivative on the strip
    let ell0 = front.ell0();
    let ldot0 = front.slope(0.0, Side::Right);
    let mut u_prev: Vec<f64> = (0..=ny)
        .map(|j| data.u0.eval((j as f64 * h * ell0).min(data.u0.b())))
        .collect::<Result<_>>()?;
    u_prev[ny] = 0.0;
    u_prev[0] = data.w.eval(0.0)?;
    let ut0: Vec<f64> = (0..=ny)
        .map(|j| {
            let y = j as f64 * h;
            let x = (y * ell0).min(data.u1.b());
            Ok(data.u1.eval(x)? + data.u0.deriv_eval(x, Side::Right)? * y * ldot0)
        })
        .collect::<Result<_>>()?;

    // Taylor first step with the transformed equation at t = 0
    let (a0, b0, c0) = coeffs(0.0);
    let f0 = |j: usize| -> f64 {
        if j == 0 || j == ny {
            return 0.0;
        }
        let uyy = (u_prev[j - 1] - 2.0 * u_prev[j] + u_prev[j + 1]) / (h * h);
        let uty = (ut0[j + 1] - ut0[j - 1]) / (2.0 * h);
        let uy = uy_of(&u_prev, j);
        a0[j] * uyy + b0[j] * uty + c0[j] * uy - nu * ut0[j]
    };
    let mut u_now: Vec<f64> = (0..=ny)
        .map(|j| u_prev[j] + k * ut0[j] + 0.5 * k * k * f0(j))
        .collect();
    u_now[0] = data.w.eval(k)?;
    u_now[ny] = 0.0;

    let mut rows = vec![u_prev.clone(), u_now.clone()];
    let mut times = vec![0.0, k];
    let damp = 1.0 + 0.5 * nu * k;

    for n in 1..n_steps {
        let t = n as f64 * k;
        let (a, b, c) = coeffs(t);
        let mut next = vec![0.0; ny + 1];
        let older: Option<&Vec<f64>> = if n >= 2 { Some(&rows[n - 2]) } else { None };
        for j in 1..ny {
            let uyy = (u_now[j - 1] - 2.0 * u_now[j] + u_now[j + 1]) / (h * h);
            let uy = (u_now[j + 1] - u_now[j - 1]) / (2.0 * h);
            let uty = match older {
                // second-order backward once two history levels exist
                Some(old) => {
                    (3.0 * uy_of(&u_now, j) - 4.0 * uy_of(&u_prev, j) + uy_of(old, j))
                        / (2.0 * k)
                }
                None => (uy_of(&u_now, j) - uy_of(&u_prev, j)) / k,
            };
            let rhs = a[j] * uyy + b[j] * uty + c[j] * uy;
            next[j] = (rhs * k * k + 2.0 * u_now[j] - u_prev[j]
                + 0.5 * nu * k * u_prev[j])
                / damp;
        }
        next[0] = data.w.eval(((n + 1) as f64 * k).min(data.w.b()))?;
        next[ny] = 0.0;
        times.push((n + 1) as f64 * k);
        rows.push(next.clone());
        u_prev = u_now;
        u_now = next;
    }

    Ok(FdmField { grid, front: front.clone(), times, rows })
}

/// L2-in-space and sup differences between the semi-analytic and reference
/// fields at one time, on a common probe grid.
pub fn compare_fields(
    semi: &crate::duhamel::WaveSolution,
    fdm: &FdmField,
    t: f64,
    n_probe: usize,
) -> Result<(f64, f64)> {
    let ell = fdm.front.ell(t);
    let mut l2 = 0.0;
    let mut sup = 0.0f64;
    let dx = ell / n_probe as f64;
    let mut prev: Option<f64> = None;
    for j in 0..=n_probe {
        let x = j as f64 * dx;
        let d = semi.u(t, x.min(ell))? - fdm.u(t, x);
        sup = sup.max(d.abs());
        if let Some(p) = prev {
            l2 += 0.5 * (p * p + d * d) * dx;
        }
        prev = Some(d);
    }
    Ok((l2.sqrt(), sup))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::SampledFunction;
    use std::f64::consts::PI;

    fn sine_data(nu: f64, n: usize) -> ProblemData {
        let u0 = SampledFunction::from_fn(0.0, 1.0, n, |x| (PI * x).sin())
            .unwrap()
            .with_derivative_fn(|x| PI * (PI * x).cos());
        let u1 = SampledFunction::zero(0.0, 1.0, n);
        let w = SampledFunction::zero(0.0, 2.0, 2 * n);
        ProblemData::new(nu, u0, u1, w, None).unwrap()
    }

    #[test]
    fn standing_wave_matches_closed_form() {
        let data = sine_data(0.0, 400);
        let front = Front::fixed(1.0).unwrap();
        let grid = FdmGrid::new(400, &front, 0.5).unwrap();
        let field = fdm_solve_prescribed(&data, &front, 0.5, grid).unwrap();
        let mut worst = 0.0f64;
        for &(t, x) in &[(0.2, 0.3), (0.35, 0.5), (0.5, 0.7), (0.45, 0.1)] {
            let expect = (PI * x).sin() * (PI * t).cos();
            worst = worst.max((field.u(t, x) - expect).abs());
        }
        assert!(worst < 5e-4, "standing-wave error {worst}");
    }

    #[test]
    fn zero_data_zero_field() {
        let u0 = SampledFunction::zero(0.0, 1.0, 64);
        let u1 = SampledFunction::zero(0.0, 1.0, 64);
        let w = SampledFunction::zero(0.0, 2.0, 64);
        let data = ProblemData::new(1.0, u0, u1, w, None).unwrap();
        let front = Front::affine(1.0, 0.3, 1.0).unwrap();
        let grid = FdmGrid::new(64, &front, 0.5).unwrap();
        let field = fdm_solve_prescribed(&data, &front, 0.5, grid).unwrap();
        for &(t, x) in &[(0.1, 0.5), (0.4, 0.9), (0.3, 0.0)] {
            assert_eq!(field.u(t, x), 0.0);
        }
    }

    #[test]
    fn damped_mode_amplitude_decay() {
        // u0 = sin(pi x), u1 = -sin(pi x): u = e^{-t} sin(pi x)
        // (cos(w t) + (nu/2 - 1)/w sin(w t)) with nu = 2, w = sqrt(pi^2 - 1);
        // here nu/2 = 1 so u = e^{-t} sin(pi x) cos(w t)
        let n = 400;
        let u0 = SampledFunction::from_fn(0.0, 1.0, n, |x| (PI * x).sin())
            .unwrap()
            .with_derivative_fn(|x| PI * (PI * x).cos());
        let u1 = SampledFunction::from_fn(0.0, 1.0, n, |x| -(PI * x).sin())
            .unwrap()
            .with_derivative_fn(|x| -PI * (PI * x).cos());
        let w = SampledFunction::zero(0.0, 2.0, n);
        let data = ProblemData::new(2.0, u0, u1, w, None).unwrap();
        let front = Front::fixed(1.0).unwrap();
        let grid = FdmGrid::new(n, &front, 0.6).unwrap();
        let field = fdm_solve_prescribed(&data, &front, 0.6, grid).unwrap();
        let omega = (PI * PI - 1.0f64).sqrt();
        let mut worst = 0.0f64;
        for &t in &[0.2, 0.4, 0.6] {
            for &x in &[0.25, 0.5, 0.75] {
                let expect = (-t as f64).exp() * (PI * x).sin() * (omega * t).cos();
                worst = worst.max((field.u(t, x) - expect).abs());
            }
        }
        assert!(worst < 1e-3, "damped-mode error {worst}");
    }

    #[test]
    fn discrete_energy_dissipates() {
        let data = sine_data(2.0, 200);
        let front = Front::fixed(1.0).unwrap();
        let grid = FdmGrid::new(200, &front, 0.5).unwrap();
        let field = fdm_solve_prescribed(&data, &front, 0.5, grid).unwrap();
        let e1 = field.internal_energy(1);
        let scale = e1.abs();
        let mut prev = e1;
        for n in 2..field.times.len() - 1 {
            let e = field.internal_energy(n);
            assert!(
                e <= prev + 1e-10 * scale,
                "energy rose at step {n}: {prev} -> {e}"
            );
            prev = e;
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let data = sine_data(0.0, 32);
        let front = Front::fixed(1.0).unwrap();
        let bad = FdmGrid { h: 1.0 / 32.0, k: 1.0 / 32.0, ny: 32 };
        assert!(fdm_solve_prescribed(&data, &front, 0.2, bad).is_err());
        let sonic = Front::new(vec![(0.0, 1.0), (1.0, 2.0)], 1.0).unwrap();
        let grid = FdmGrid::new(32, &front, 0.2).unwrap();
        assert!(fdm_solve_prescribed(&data, &sonic, 0.2, grid).is_err());
    }
}
