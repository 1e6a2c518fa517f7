//! Travelling-wave decomposition of the undamped homogeneous solution on the
//! explicit zones, built from initial and boundary data, plus compatibility
//! checking.
//!
//! The solution of the undamped problem splits as `A(t,x) = p(t+x) + q(t-x)`
//! where the left-moving part `p` and right-moving part `q` are read off the
//! data and, past the first front reflection, off the reflection map. Both
//! are evaluated on demand so that no resampling error enters.

use crate::error::{Error, Result};
use crate::geometry::{CharMaps, Zone};
use crate::pwlinear::Side;
use crate::sample::SampledFunction;
use std::sync::Arc;

/// Bivariate forcing term `f(t, x)`, either a closure or a bilinear grid.
#[derive(Clone)]
pub enum Forcing {
    Analytic(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    Sampled { ts: Vec<f64>, xs: Vec<f64>, grid: Vec<f64> },
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Analytic(_) => write!(f, "Forcing::Analytic"),
            Forcing::Sampled { ts, xs, .. } => {
                write!(f, "Forcing::Sampled({}x{})", ts.len(), xs.len())
            }
        }
    }
}

fn bilinear(knots: &[f64], x: f64) -> (usize, f64) {
    let n = knots.len();
    if x <= knots[0] {
        return (0, 0.0);
    }
    if x >= knots[n - 1] {
        return (n - 2, 1.0);
    }
    let i = knots.partition_point(|&k| k <= x).saturating_sub(1).min(n - 2);
    (i, (x - knots[i]) / (knots[i + 1] - knots[i]))
}

impl Forcing {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            Forcing::Analytic(f) => f(t, x),
            Forcing::Sampled { ts, xs, grid } => {
                let (i, a) = bilinear(ts, t);
                let (j, b) = bilinear(xs, x);
                let nx = xs.len();
                let v00 = grid[i * nx + j];
                let v01 = grid[i * nx + j + 1];
                let v10 = grid[(i + 1) * nx + j];
                let v11 = grid[(i + 1) * nx + j + 1];
                (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)
            }
        }
    }
}

/// Full problem description at the damped (`u`) level, with the transformed
/// data derived once: `v0 = u0`, `v1 = u1 + (nu/2) u0`, `z(t) = e^{nu t/2} w(t)`.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub nu: f64,
    pub ell0: f64,
    pub u0: SampledFunction,
    pub u1: SampledFunction,
    pub w: SampledFunction,
    pub forcing: Option<Forcing>,
    pub v0: SampledFunction,
    pub v1: SampledFunction,
}

impl ProblemData {
    pub fn new(
        nu: f64,
        u0: SampledFunction,
        u1: SampledFunction,
        w: SampledFunction,
        forcing: Option<Forcing>,
    ) -> Result<Self> {
        if nu < 0.0 {
            return Err(Error::Validation { field: "nu".into(), msg: "must be >= 0".into() });
        }
        let ell0 = u0.b();
        if (u1.b() - ell0).abs() > 1e-9 * (1.0 + ell0) || u0.a() != 0.0 || u1.a() != 0.0 {
            return Err(Error::Validation {
                field: "u0/u1".into(),
                msg: "initial data must share the domain [0, ell0]".into(),
            });
        }
        if u0.n_cells() != u1.n_cells() {
            return Err(Error::Validation {
                field: "u0/u1".into(),
                msg: "initial data must share one grid".into(),
            });
        }
        let v0 = u0.clone();
        let half_nu = 0.5 * nu;
        let v1_vals: Vec<f64> = u1
            .values()
            .iter()
            .zip(u0.values())
            .map(|(&a, &b)| a + half_nu * b)
            .collect();
        let v1 = SampledFunction::new(0.0, u1.b(), v1_vals)?;
        Ok(Self { nu, ell0, u0, u1, w, forcing, v0, v1 })
    }

    /// Transformed boundary trace `z(t) = e^{nu t/2} w(t)`, exact wherever
    /// `w` is.
    pub fn z(&self, t: f64) -> Result<f64> {
        Ok((0.5 * self.nu * t).exp() * self.w.eval(t)?)
    }

    pub fn z_deriv(&self, t: f64, side: Side) -> Result<f64> {
        let e = (0.5 * self.nu * t).exp();
        Ok(e * (self.w.deriv_eval(t, side)? + 0.5 * self.nu * self.w.eval(t)?))
    }

    /// Transformed forcing `g(t,x) = e^{nu t/2} f(t,x)`; zero when absent.
    pub fn g(&self, t: f64, x: f64) -> f64 {
        match &self.forcing {
            None => 0.0,
            Some(f) => (0.5 * self.nu * t).exp() * f.eval(t, x),
        }
    }

    /// Recovers the `u`-level data from the transformed ones; inverse of the
    /// construction in [`ProblemData::new`].
    pub fn untransform(&self) -> (SampledFunction, Vec<f64>) {
        let half_nu = 0.5 * self.nu;
        let u1_vals: Vec<f64> = self
            .v1
            .values()
            .iter()
            .zip(self.v0.values())
            .map(|(&a, &b)| a - half_nu * b)
            .collect();
        (self.v0.clone(), u1_vals)
    }
}

/// How the order-1 compatibility condition at the front end is posed: with a
/// prescribed initial front speed, or with the speed induced by the front law
/// at the given toughness.
#[derive(Debug, Clone, Copy)]
pub enum FrontStart {
    Slope(f64),
    FrontLaw { kappa0: f64 },
}

#[derive(Debug, Clone)]
pub struct CompatReport {
    pub order: u8,
    pub tol: f64,
    /// `(condition, |violation|)` for every failed condition.
    pub violations: Vec<(String, f64)>,
}

impl CompatReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Order-0 checks `u0(0) = w(0)` and `u0(ell0) = 0`; order-1 additionally
/// checks `u1(0) = w'(0)` and the front-end condition
/// `u1(ell0) + ldot(0) u0'(ell0) = 0`.
pub fn check_compatibility(
    data: &ProblemData,
    order: u8,
    front_start: Option<FrontStart>,
    tol: f64,
) -> Result<CompatReport> {
    let mut violations = Vec::new();
    let ell0 = data.ell0;
    let r0 = (data.u0.eval(0.0)? - data.w.eval(0.0)?).abs();
    if r0 > tol {
        violations.push(("u0(0) = w(0)".to_string(), r0));
    }
    let r1 = data.u0.eval(ell0)?.abs();
    if r1 > tol {
        violations.push(("u0(ell0) = 0".to_string(), r1));
    }
    if order >= 1 {
        let r2 = (data.u1.eval(0.0)? - data.w.deriv_eval(0.0, Side::Right)?).abs();
        if r2 > tol {
            violations.push(("u1(0) = w'(0)".to_string(), r2));
        }
        let du0_end = data.u0.deriv_eval(ell0, Side::Left)?;
        let u1_end = data.u1.eval(ell0)?;
        let slope0 = match front_start {
            None | Some(FrontStart::Slope(_)) => match front_start {
                Some(FrontStart::Slope(s)) => s,
                _ => 0.0,
            },
            Some(FrontStart::FrontLaw { kappa0 }) => {
                let b2 = (du0_end - u1_end).powi(2);
                ((b2 - 2.0 * kappa0) / (b2 + 2.0 * kappa0)).max(0.0)
            }
        };
        let r3 = (u1_end + slope0 * du0_end).abs();
        if r3 > tol {
            violations.push(("u1(ell0) + ldot(0) u0'(ell0) = 0".to_string(), r3));
        }
    }
    Ok(CompatReport { order, tol, violations })
}

/// Boundary trace for one solve window: the global load `w` shifted so the
/// window starts at local time zero, carried at the transformed level.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub w: SampledFunction,
    pub nu: f64,
    pub t_offset: f64,
}

impl BoundaryTrace {
    pub fn eval(&self, s: f64) -> Result<f64> {
        let t = self.t_offset + s;
        Ok((0.5 * self.nu * t).exp() * self.w.eval(t)?)
    }

    pub fn deriv(&self, s: f64, side: Side) -> Result<f64> {
        let t = self.t_offset + s;
        let e = (0.5 * self.nu * t).exp();
        Ok(e * (self.w.deriv_eval(t, side)? + 0.5 * self.nu * self.w.eval(t)?))
    }
}

/// Transformed data anchored at a window's local time zero. For the first
/// window these are the scenario data; for later windows they are restart
/// slices of the running solution, carried out to the exact front position by
/// tail knots with explicit one-sided limits at the front.
#[derive(Debug, Clone)]
pub struct WindowData {
    pub ell0: f64,
    pub v0: SampledFunction,
    pub v1: SampledFunction,
    pub z: BoundaryTrace,
    /// Interior one-sided limits of `v0'` and `v1` at `x = ell0`.
    pub dv0_front: f64,
    pub v1_front: f64,
}

impl WindowData {
    pub fn from_problem(data: &ProblemData) -> Result<Self> {
        let ell0 = data.ell0;
        let dv0_front = data.v0.deriv_eval(ell0, Side::Left)?;
        let v1_front = data.v1.eval(ell0)?;
        Ok(Self {
            ell0,
            v0: data.v0.clone(),
            v1: data.v1.clone(),
            z: BoundaryTrace { w: data.w.clone(), nu: data.nu, t_offset: 0.0 },
            dv0_front,
            v1_front,
        })
    }

    /// `v0'(x)` with the stored front limit past the uniform grid.
    pub fn dv0(&self, x: f64, side: Side) -> Result<f64> {
        if x > self.v0.b() {
            return Ok(self.dv0_front);
        }
        self.v0.deriv_eval(x, side)
    }

    pub fn v1_at(&self, x: f64) -> Result<f64> {
        if x > self.v1.b() && x <= self.ell0 + 1e-9 * (1.0 + self.ell0) {
            return Ok(self.v1_front);
        }
        self.v1.eval(x.min(self.ell0))
    }
}

/// The travelling parts `p` (left-moving, argument `t+x`) and `q`
/// (right-moving, argument `t-x`) of the homogeneous solution, with their
/// derivatives, evaluated exactly from data and reflection map.
pub struct TravellingParts<'a> {
    pub data: &'a WindowData,
    pub maps: &'a CharMaps,
}

impl<'a> TravellingParts<'a> {
    pub fn new(data: &'a WindowData, maps: &'a CharMaps) -> Self {
        Self { data, maps }
    }

    /// Left-moving part on `(0, 2 t*)`: direct from data up to `ell0`, then
    /// through the reflection map off the front.
    pub fn p(&self, s: f64) -> Result<f64> {
        let d = self.data;
        if s <= d.ell0 {
            let s = s.max(0.0);
            Ok(0.5 * d.v0.eval(s)? + 0.5 * d.v1.integral_from_a(s)?)
        } else {
            let r = -self.maps.reflect(s)?;
            Ok(-0.5 * d.v0.eval(r)? + 0.5 * d.v1.integral_from_a(r)?)
        }
    }

    /// Right-moving part on `(-ell0, ell0)`: data for negative arguments,
    /// boundary trace for positive ones.
    pub fn q(&self, s: f64) -> Result<f64> {
        let d = self.data;
        if s <= 0.0 {
            let r = (-s).min(d.ell0);
            Ok(0.5 * d.v0.eval(r)? - 0.5 * d.v1.integral_from_a(r)?)
        } else {
            Ok(d.z.eval(s)? - 0.5 * d.v0.eval(s)? - 0.5 * d.v1.integral_from_a(s)?)
        }
    }

    pub fn dp(&self, s: f64, side: Side) -> Result<f64> {
        let d = self.data;
        if s < d.ell0 || (s == d.ell0 && side == Side::Left) {
            let s = s.max(0.0);
            Ok(0.5 * (d.dv0(s, side)? + d.v1_at(s)?))
        } else {
            let r = -self.maps.reflect(s)?;
            let inner = if side == Side::Right { Side::Left } else { Side::Right };
            let wdot = self.maps.reflect_slope(s, side)?;
            Ok(0.5 * wdot * (d.dv0(r, inner)? - d.v1_at(r)?))
        }
    }

    pub fn dq(&self, s: f64, side: Side) -> Result<f64> {
        let d = self.data;
        if s < 0.0 || (s == 0.0 && side == Side::Left) {
            let r = (-s).min(d.ell0);
            let inner = if side == Side::Right { Side::Left } else { Side::Right };
            Ok(0.5 * (-d.dv0(r, inner)? + d.v1_at(r)?))
        } else {
            Ok(d.z.deriv(s, side)? - 0.5 * (d.dv0(s, side)? + d.v1_at(s)?))
        }
    }

    /// The homogeneous solution `A(t,x) = p(t+x) + q(t-x)` on the explicit
    /// zones, extended by zero at and past the front. Errors in the
    /// multiply-reflected zone, where the decomposition no longer holds.
    pub fn eval_a(&self, t: f64, x: f64) -> Result<f64> {
        match self.maps.classify(t, x) {
            Zone::Bonded => Ok(0.0),
            Zone::MultiplyReflected => Err(Error::Domain(format!(
                "homogeneous solution not representable at ({t}, {x}): multiply reflected"
            ))),
            _ => Ok(self.p(t + x)? + self.q(t - x)?),
        }
    }

    /// `A_t` and `A_x` from the travelling parts; zero past the front.
    pub fn eval_a_deriv(&self, t: f64, x: f64, side: Side) -> Result<(f64, f64)> {
        match self.maps.classify(t, x) {
            Zone::Bonded => Ok((0.0, 0.0)),
            Zone::MultiplyReflected => Err(Error::Domain(format!(
                "homogeneous derivatives not representable at ({t}, {x})"
            ))),
            _ => {
                let dp = self.dp(t + x, side)?;
                // q's argument decreases in x: flip the side for the x-trace
                let dq = self.dq(t - x, side)?;
                Ok((dp + dq, dp - dq))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Front;
    use std::f64::consts::PI;

    fn fixed_window(
        n: usize,
        v0: impl Fn(f64) -> f64,
        v1: impl Fn(f64) -> f64,
    ) -> (WindowData, CharMaps) {
        let u0 = SampledFunction::from_fn(0.0, 1.0, n, &v0).unwrap();
        let u1 = SampledFunction::from_fn(0.0, 1.0, n, &v1).unwrap();
        let w = SampledFunction::zero(0.0, 4.0, 4 * n);
        let data = ProblemData::new(0.0, u0, u1, w, None).unwrap();
        let wd = WindowData::from_problem(&data).unwrap();
        let maps = CharMaps::new(Front::fixed(1.0).unwrap()).unwrap();
        (wd, maps)
    }

    #[test]
    fn zero_data_gives_zero_parts() {
        let (wd, maps) = fixed_window(8, |_| 0.0, |_| 0.0);
        let parts = TravellingParts::new(&wd, &maps);
        for &s in &[0.1, 0.9, 1.0, 1.5] {
            assert_eq!(parts.p(s).unwrap(), 0.0);
        }
        for &s in &[-0.9, -0.1, 0.0, 0.5] {
            assert_eq!(parts.q(s).unwrap(), 0.0);
        }
        assert_eq!(parts.eval_a(0.3, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn unit_velocity_parts_by_hand() {
        // v0 = 0, v1 = 1 on a fixed unit front: p(s) = s/2 then (2-s)/2,
        // q(s) = s/2 below zero and -s/2 above.
        let (wd, maps) = fixed_window(16, |_| 0.0, |_| 1.0);
        let parts = TravellingParts::new(&wd, &maps);
        for &s in &[0.25, 0.5, 1.0] {
            assert!((parts.p(s).unwrap() - s / 2.0).abs() < 1e-15);
        }
        for &s in &[1.25, 1.75] {
            assert!((parts.p(s).unwrap() - (2.0 - s) / 2.0).abs() < 1e-15);
        }
        for &s in &[-0.75, -0.25, 0.0] {
            assert!((parts.q(s).unwrap() - s / 2.0).abs() < 1e-15);
        }
        for &s in &[0.25, 0.75] {
            assert!((parts.q(s).unwrap() + s / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn homogeneous_value_in_each_zone() {
        // sine displacement, first zone
        let (wd, maps) = fixed_window(1000, |x| (PI * x).sin(), |_| 0.0);
        let parts = TravellingParts::new(&wd, &maps);
        let got = parts.eval_a(0.2, 0.5).unwrap();
        let expect = 0.5 * ((0.3 * PI).sin() + (0.7 * PI).sin());
        assert!((got - expect).abs() < 1e-6);

        // unit velocity, front-reflected zone: A = (integral of 1)/2 over
        // [x-t, -omega(x+t)] = [0.3, 0.9]
        let (wd, maps) = fixed_window(16, |_| 0.0, |_| 1.0);
        let parts = TravellingParts::new(&wd, &maps);
        let got = parts.eval_a(0.4, 0.7).unwrap();
        assert!((got - 0.3).abs() < 1e-15);

        // past the front and in the multiply-reflected zone
        assert_eq!(parts.eval_a(0.4, 1.2).unwrap(), 0.0);
        assert!(parts.eval_a(0.9, 0.85).is_err());
    }

    #[test]
    fn branch_formulas_agree_with_parts() {
        // direct three-branch evaluation as an independent check
        let (wd, maps) = fixed_window(400, |x| (PI * x).sin(), |x| 0.3 * (2.0 * PI * x).sin());
        let parts = TravellingParts::new(&wd, &maps);
        let branch = |t: f64, x: f64| -> f64 {
            match maps.classify(t, x) {
                Zone::Direct => {
                    0.5 * wd.v0.eval(x - t).unwrap()
                        + 0.5 * wd.v0.eval(x + t).unwrap()
                        + 0.5 * wd.v1.integral(x - t, x + t).unwrap()
                }
                Zone::BoundaryReflected => {
                    wd.z.eval(t - x).unwrap() - 0.5 * wd.v0.eval(t - x).unwrap()
                        + 0.5 * wd.v0.eval(t + x).unwrap()
                        + 0.5 * wd.v1.integral(t - x, t + x).unwrap()
                }
                Zone::FrontReflected => {
                    let r = -maps.reflect(x + t).unwrap();
                    0.5 * wd.v0.eval(x - t).unwrap() - 0.5 * wd.v0.eval(r).unwrap()
                        + 0.5 * wd.v1.integral(x - t, r).unwrap()
                }
                _ => 0.0,
            }
        };
        for &(t, x) in &[(0.2, 0.5), (0.3, 0.1), (0.45, 0.2), (0.3, 0.75), (0.4, 0.8)] {
            let a = parts.eval_a(t, x).unwrap();
            let b = branch(t, x);
            assert!(
                (a - b).abs() <= 4.0 * f64::EPSILON * (1.0 + a.abs()) + 1e-12,
                "mismatch at ({t},{x}): {a} vs {b}"
            );
        }
    }

    #[test]
    fn trace_identities() {
        let (wd, maps) = fixed_window(500, |x| (PI * x).sin(), |x| 0.5 * (PI * x).sin());
        let parts = TravellingParts::new(&wd, &maps);
        // A(0, x) = v0(x)
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            let a = parts.eval_a(0.0, x).unwrap();
            assert!((a - wd.v0.eval(x).unwrap()).abs() < 1e-12);
        }
        // A(t, 0) = z(t) (= 0 here), A(t, ell(t)) = 0
        for k in 1..=9 {
            let t = 0.05 * k as f64;
            assert!(parts.eval_a(t, 0.0).unwrap().abs() < 1e-12);
            assert!(parts.eval_a(t, 1.0).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn compatibility_orders() {
        let n = 64;
        let mk = |u0: fn(f64) -> f64, u1: fn(f64) -> f64| -> ProblemData {
            let u0 = SampledFunction::from_fn(0.0, 1.0, n, u0).unwrap();
            let u1 = SampledFunction::from_fn(0.0, 1.0, n, u1).unwrap();
            let w = SampledFunction::zero(0.0, 2.0, 2 * n);
            ProblemData::new(0.0, u0, u1, w, None).unwrap()
        };
        let zero = mk(|_| 0.0, |_| 0.0);
        assert!(check_compatibility(&zero, 1, None, 1e-8).unwrap().passed());

        let sine = mk(|x| (PI * x).sin(), |_| 0.0);
        assert!(check_compatibility(&sine, 0, None, 1e-8).unwrap().passed());

        // order-0 passes but order-1 fails: u1(0) = 1 != 0 = w'(0)
        let kick = mk(|_| 0.0, |_| 1.0);
        let r0 = check_compatibility(&kick, 0, None, 1e-8).unwrap();
        assert!(r0.passed());
        let r1 = check_compatibility(&kick, 1, None, 1e-8).unwrap();
        assert!(!r1.passed());
        assert_eq!(r1.violations.len(), 2);
    }

    #[test]
    fn transform_round_trip() {
        let u0 = SampledFunction::from_fn(0.0, 1.0, 32, |x| x * (1.0 - x)).unwrap();
        let u1 = SampledFunction::from_fn(0.0, 1.0, 32, |x| 1.0 - x).unwrap();
        let w = SampledFunction::from_fn(0.0, 2.0, 64, |t| 0.1 * t).unwrap();
        let data = ProblemData::new(2.0, u0.clone(), u1.clone(), w, None).unwrap();
        // v1 = u1 + u0 for nu = 2
        for (i, &v) in data.v1.values().iter().enumerate() {
            let expect = u1.values()[i] + u0.values()[i];
            assert!((v - expect).abs() < 1e-15);
        }
        // inverse transform recovers u1 exactly
        let (_, u1_back) = data.untransform();
        for (a, b) in u1_back.iter().zip(u1.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        // z(1) = e for w = 1 at nu = 2
        let w1 = SampledFunction::from_fn(0.0, 2.0, 4, |_| 1.0).unwrap();
        let data = ProblemData::new(
            2.0,
            SampledFunction::zero(0.0, 1.0, 4),
            SampledFunction::zero(0.0, 1.0, 4),
            w1,
            None,
        )
        .unwrap();
        assert!((data.z(1.0).unwrap() - std::f64::consts::E).abs() < 1e-14);
    }
}
