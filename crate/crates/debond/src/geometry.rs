//! Characteristic-coordinate machinery for the moving boundary: the front,
//! the maps it induces, the partition of space-time into reflection zones,
//! and the backward integration region used by the representation formula.
//!
//! The front is piecewise linear, so every derived map here is an exact
//! piecewise-linear object; all geometry is exact up to rounding.

use crate::error::{Error, Result};
use crate::pwlinear::{PiecewiseLinear, Side};

/// Debonding front: nondecreasing piecewise-linear `ell(t)` with
/// `ell(0) = ell0 > 0` and slopes in `[0, speed_cap]`.
#[derive(Debug, Clone)]
pub struct Front {
    ell: PiecewiseLinear,
    ell0: f64,
    speed_cap: f64,
}

/// Slope-cap slack: scenario fronts are often built from floating-point
/// arithmetic that overshoots the cap by a few ulp.
const SLOPE_SLACK: f64 = 1e-12;

impl Front {
    /// `breakpoints` are `(t, ell)` pairs; the first must be `(0, ell0)`.
    pub fn new(breakpoints: Vec<(f64, f64)>, speed_cap: f64) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::Structural("front needs at least one breakpoint".into()));
        }
        if breakpoints[0].0 != 0.0 {
            return Err(Error::Structural("first front breakpoint must be at t = 0".into()));
        }
        let ell0 = breakpoints[0].1;
        if !(ell0 > 0.0) {
            return Err(Error::Structural("ell0 must be positive".into()));
        }
        if !(speed_cap > 0.0 && speed_cap <= 1.0) {
            return Err(Error::Structural("speed cap must lie in (0, 1]".into()));
        }
        let (ts, ells): (Vec<f64>, Vec<f64>) = breakpoints.into_iter().unzip();
        let ell = PiecewiseLinear::new(ts, ells)?;
        let (lo, hi) = (ell.min_slope(), ell.max_slope());
        if lo < -SLOPE_SLACK {
            return Err(Error::Structural(format!("front must be nondecreasing (slope {lo})")));
        }
        if hi > speed_cap + SLOPE_SLACK {
            return Err(Error::Structural(format!(
                "front slope {hi} exceeds the speed cap {speed_cap}"
            )));
        }
        Ok(Self { ell, ell0, speed_cap })
    }

    pub fn fixed(ell0: f64) -> Result<Self> {
        Self::new(vec![(0.0, ell0)], 1.0)
    }

    pub fn affine(ell0: f64, slope: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![(0.0, ell0), (horizon, ell0 + slope * horizon)], 1.0)
    }

    pub fn ell0(&self) -> f64 {
        self.ell0
    }

    pub fn speed_cap(&self) -> f64 {
        self.speed_cap
    }

    pub fn ell(&self, t: f64) -> f64 {
        self.ell.eval(t)
    }

    pub fn slope(&self, t: f64, side: Side) -> f64 {
        self.ell.slope(t, side).clamp(0.0, self.speed_cap)
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ell.knots().iter().copied().zip(self.ell.values().iter().copied())
    }

    /// Restriction to `[t0, t0 + len]`, re-anchored at local time zero.
    pub fn shifted(&self, t0: f64, len: f64) -> Result<Front> {
        let mut bps = vec![(0.0, self.ell(t0))];
        for (t, e) in self.breakpoints() {
            if t > t0 && t < t0 + len {
                bps.push((t - t0, e));
            }
        }
        bps.push((len, self.ell(t0 + len)));
        bps.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
        Front::new(bps, self.speed_cap)
    }
}

/// The five zones of the quarter-plane `t >= 0, x >= 0` relative to the film:
/// the first three admit explicit travelling-wave formulas (no reflection,
/// one reflection off the loaded end `x = 0`, one reflection off the moving
/// front), `Bonded` lies at or past the front where the film is still glued,
/// and `MultiplyReflected` has seen both ends and no closed formula applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Direct,
    BoundaryReflected,
    FrontReflected,
    Bonded,
    MultiplyReflected,
}

/// Characteristic maps derived from a front. In characteristic variables
/// `xi = t - x`, `eta = t + x`:
/// - `front_xi(t) = t - ell(t)` is the xi-label of the front point,
/// - `front_eta(t) = t + ell(t)` its eta-label (strictly increasing),
/// - `reflect(s)` sends an incoming eta-label to the xi-label it leaves the
///   front with (the reflection map), defined for `s >= ell0`,
/// - `time_at_xi(y)` inverts `front_xi`; it exists only while the front is
///   strictly subsonic and is the backbone of the coupled solver.
#[derive(Debug, Clone)]
pub struct CharMaps {
    front: Front,
    psi_inv: PiecewiseLinear,
    omega: PiecewiseLinear,
    lambda: Option<PiecewiseLinear>,
    t_star: f64,
}

impl CharMaps {
    pub fn new(front: Front) -> Result<Self> {
        // one knot past the front's last breakpoint pins the extension slope
        // of every derived map (their extrapolation slopes differ from ell's)
        let mut ts: Vec<f64> = front.ell.knots().to_vec();
        ts.push(ts.last().unwrap() + 1.0 + front.ell0);
        let psi_vals: Vec<f64> = ts.iter().map(|&t| t + front.ell(t)).collect();
        let phi_vals: Vec<f64> = ts.iter().map(|&t| t - front.ell(t)).collect();
        let psi = PiecewiseLinear::new(ts.clone(), psi_vals)?;
        let psi_inv = psi.inverse()?;
        let omega = PiecewiseLinear::new(psi.values().to_vec(), phi_vals.clone())?;
        let phi = PiecewiseLinear::new(ts, phi_vals)?;
        let lambda = phi.inverse().ok();
        // first root of t - ell(t) = 0 past ell0; the front is sonic there
        let t_star =
            phi.first_crossing(0.0, front.ell0, f64::INFINITY).unwrap_or(f64::INFINITY);
        Ok(Self { front, psi_inv, omega, lambda, t_star })
    }

    pub fn front(&self) -> &Front {
        &self.front
    }

    pub fn ell0(&self) -> f64 {
        self.front.ell0
    }

    pub fn ell(&self, t: f64) -> f64 {
        self.front.ell(t)
    }

    pub fn front_xi(&self, t: f64) -> f64 {
        t - self.front.ell(t)
    }

    pub fn front_eta(&self, t: f64) -> f64 {
        t + self.front.ell(t)
    }

    pub fn time_at_eta(&self, s: f64) -> f64 {
        self.psi_inv.eval(s)
    }

    /// Reflection map off the moving front, defined for `s >= ell0`.
    pub fn reflect(&self, s: f64) -> Result<f64> {
        if s < self.front.ell0 - 1e-12 * (1.0 + self.front.ell0) {
            return Err(Error::Domain(format!(
                "reflection map evaluated at {s} < ell0 = {}",
                self.front.ell0
            )));
        }
        Ok(self.omega.eval(s))
    }

    /// Slope of the reflection map on the requested side; lies in `[0, 1]`.
    pub fn reflect_slope(&self, s: f64, side: Side) -> Result<f64> {
        if s < self.front.ell0 - 1e-12 * (1.0 + self.front.ell0) {
            return Err(Error::Domain(format!(
                "reflection slope evaluated at {s} < ell0 = {}",
                self.front.ell0
            )));
        }
        Ok(self.omega.slope(s, side).clamp(0.0, 1.0))
    }

    /// Inverse of `front_xi`; requires the front strictly subsonic.
    pub fn time_at_xi(&self, y: f64) -> Result<f64> {
        let lambda = self.lambda.as_ref().ok_or_else(|| {
            Error::Structural(
                "front reaches slope 1: t - ell(t) is not invertible".into(),
            )
        })?;
        let slack = 1e-9 * (1.0 + self.front.ell0);
        if y < -self.front.ell0 - slack {
            return Err(Error::Domain(format!(
                "time_at_xi: {y} below -ell0 = {}",
                -self.front.ell0
            )));
        }
        Ok(lambda.eval(y.max(-self.front.ell0)))
    }

    /// First time the front reaches the sound line `t = ell(t)`; infinite if
    /// it never does.
    pub fn sonic_time(&self) -> f64 {
        self.t_star
    }

    /// Zone classification with deterministic boundary ties: `t + x = ell0`
    /// with `t <= x` and `t = x` with `t + x <= ell0` both go to `Direct`;
    /// `x = ell(t)` goes to `Bonded`.
    pub fn classify(&self, t: f64, x: f64) -> Zone {
        let ell0 = self.front.ell0;
        if x >= self.front.ell(t) {
            Zone::Bonded
        } else if t <= x && t + x <= ell0 {
            Zone::Direct
        } else if t > x && t + x < ell0 {
            Zone::BoundaryReflected
        } else if t < x && t + x > ell0 {
            Zone::FrontReflected
        } else {
            Zone::MultiplyReflected
        }
    }

    /// Backward integration region through `(t, x)`; errors outside the three
    /// explicit zones.
    pub fn region(&self, t: f64, x: f64) -> Result<Region> {
        let zone = self.classify(t, x);
        let (gamma1, gamma2) = match zone {
            Zone::Direct => (
                vec![(0.0, x - t), (t, x)],
                vec![(0.0, x + t), (t, x)],
            ),
            Zone::BoundaryReflected => (
                vec![(0.0, t - x), (t - x, 0.0), (t, x)],
                vec![(0.0, x + t), (t, x)],
            ),
            Zone::FrontReflected => {
                let eta = t + x;
                let switch = self.time_at_eta(eta);
                let w = self.reflect(eta)?;
                (
                    vec![(0.0, x - t), (t, x)],
                    vec![(0.0, -w), (switch, switch - w), (t, x)],
                )
            }
            Zone::Bonded | Zone::MultiplyReflected => {
                return Err(Error::Domain(format!(
                    "no integration region at ({t}, {x}): zone {zone:?}"
                )));
            }
        };
        Ok(Region { t, x, zone, gamma1, gamma2 })
    }
}

/// The region `{0 < tau < t, gamma1(tau) < sigma < gamma2(tau)}` swept by the
/// backward light cone of `(t, x)`, clipped against the boundaries. Both
/// boundary curves are short polylines.
#[derive(Debug, Clone)]
pub struct Region {
    pub t: f64,
    pub x: f64,
    pub zone: Zone,
    gamma1: Vec<(f64, f64)>,
    gamma2: Vec<(f64, f64)>,
}

fn polyline_eval(p: &[(f64, f64)], tau: f64) -> f64 {
    for w in p.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if tau <= t1 || std::ptr::eq(w.as_ptr(), &p[p.len() - 2]) {
            if t1 == t0 {
                return v1;
            }
            return v0 + (v1 - v0) * (tau - t0) / (t1 - t0);
        }
    }
    p[0].1
}

impl Region {
    pub fn gamma1(&self, tau: f64) -> f64 {
        polyline_eval(&self.gamma1, tau)
    }

    pub fn gamma2(&self, tau: f64) -> f64 {
        polyline_eval(&self.gamma2, tau)
    }

    /// Interior tau-values where a boundary curve has a kink.
    pub fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self
            .gamma1
            .iter()
            .chain(self.gamma2.iter())
            .map(|&(tau, _)| tau)
            .filter(|&tau| tau > 0.0 && tau < self.t)
            .collect();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * (1.0 + self.t));
        k
    }

    /// Exact area: the width `gamma2 - gamma1` is piecewise linear in tau, so
    /// the trapezoid rule on the kink partition is exact.
    pub fn area(&self) -> f64 {
        let mut taus = vec![0.0];
        taus.extend(self.kinks());
        taus.push(self.t);
        let mut a = 0.0;
        for w in taus.windows(2) {
            let w0 = self.gamma2(w[0]) - self.gamma1(w[0]);
            let w1 = self.gamma2(w[1]) - self.gamma1(w[1]);
            a += 0.5 * (w0 + w1) * (w[1] - w[0]);
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_maps() -> CharMaps {
        CharMaps::new(Front::fixed(1.0).unwrap()).unwrap()
    }

    #[test]
    fn constant_front_maps() {
        let m = fixed_maps();
        // pure translation: xi/eta labels and their consistency
        assert_eq!(m.front_xi(0.5), -0.5);
        assert_eq!(m.front_eta(0.5), 1.5);
        assert_eq!(m.ell(0.5), 1.0);
        assert!((m.reflect(1.5).unwrap() - (-0.5)).abs() < 1e-15);
        // reflect(front_eta(t)) = front_xi(t) by construction
        for &t in &[0.0, 0.3, 1.7] {
            let lhs = m.reflect(m.front_eta(t)).unwrap();
            assert!((lhs - m.front_xi(t)).abs() < 1e-14);
        }
        // zero front speed: reflection slope 1 everywhere
        assert_eq!(m.reflect_slope(2.3, Side::Right).unwrap(), 1.0);
        assert!(m.reflect(0.5).is_err());
    }

    #[test]
    fn affine_front_maps() {
        // ell(t) = 1 + t/2: closed forms for the reflection map
        let m = CharMaps::new(Front::affine(1.0, 0.5, 10.0).unwrap()).unwrap();
        let s = 4.0;
        assert!((m.reflect(s).unwrap() - (s - 4.0) / 3.0).abs() < 1e-14);
        let expect = (1.0 - 0.5) / (1.0 + 0.5);
        assert!((m.reflect_slope(s, Side::Right).unwrap() - expect).abs() < 1e-14);
        // lambda: phi(t) = t/2 - 1, so lambda(0) = 2
        assert!((m.time_at_xi(0.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((m.time_at_xi(-1.0).unwrap() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn constant_front_lambda_is_shift() {
        let m = fixed_maps();
        for &y in &[-1.0, -0.4, 0.0, 2.0] {
            assert!((m.time_at_xi(y).unwrap() - (y + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn sonic_front_has_no_lambda() {
        let f = Front::new(vec![(0.0, 1.0), (1.0, 2.0)], 1.0).unwrap();
        let m = CharMaps::new(f).unwrap();
        assert!(m.time_at_xi(0.0).is_err());
        // t - ell(t) = -1 for all t: never reaches the sound line
        assert!(m.sonic_time().is_infinite());
    }

    #[test]
    fn sonic_time_detected() {
        // ell(t) = 1 + t/2 crosses t = ell(t) at t = 2
        let m = CharMaps::new(Front::affine(1.0, 0.5, 10.0).unwrap()).unwrap();
        assert!((m.sonic_time() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn classify_zones() {
        let m = fixed_maps();
        assert_eq!(m.classify(0.3, 0.5), Zone::Direct);
        assert_eq!(m.classify(0.6, 0.2), Zone::BoundaryReflected);
        assert_eq!(m.classify(0.4, 0.7), Zone::FrontReflected);
        assert_eq!(m.classify(0.5, 2.0), Zone::Bonded);
        assert_eq!(m.classify(0.9, 0.85), Zone::MultiplyReflected);
        // tie-breaks
        assert_eq!(m.classify(0.4, 0.6), Zone::Direct); // t + x = ell0, t <= x
        assert_eq!(m.classify(0.3, 0.3), Zone::Direct); // t = x, t + x < ell0
        assert_eq!(m.classify(0.2, 1.0), Zone::Bonded); // x = ell(t)
    }

    #[test]
    fn region_areas_match_hand_values() {
        let m = fixed_maps();
        // direct cone: area t^2
        let r = m.region(0.3, 0.5).unwrap();
        assert!((r.area() - 0.09).abs() < 1e-15);
        // one reflection off x = 0: 2xt - x^2
        let r = m.region(0.6, 0.2).unwrap();
        assert!((r.area() - 0.20).abs() < 1e-15);
        // outside the film
        assert!(m.region(0.5, 2.0).is_err());
    }

    #[test]
    fn region_front_reflected_switch() {
        let m = fixed_maps();
        let r = m.region(0.4, 0.7).unwrap();
        // eta = 1.1 reflects at time psi^{-1}(1.1) = 0.1 with label omega = -0.9
        assert!((m.time_at_eta(1.1) - 0.1).abs() < 1e-15);
        assert!((m.reflect(1.1).unwrap() + 0.9).abs() < 1e-15);
        assert_eq!(r.kinks().len(), 1);
        assert!((r.kinks()[0] - 0.1).abs() < 1e-15);
        // upper boundary: reflected characteristic then the cone edge
        assert!((r.gamma2(0.05) - 0.95).abs() < 1e-15); // tau - omega = 0.05 + 0.9
        assert!((r.gamma2(0.3) - 0.8).abs() < 1e-15); // x + t - tau = 1.1 - 0.3
        assert!(r.gamma1(0.2) <= r.gamma2(0.2));
        // hand value: 0.6 * 0.1 + [0.8 tau - tau^2] over [0.1, 0.4]
        assert!((r.area() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn gamma_ordering_everywhere() {
        let m = CharMaps::new(Front::affine(1.0, 0.3, 4.0).unwrap()).unwrap();
        for &(t, x) in &[(0.2, 0.4), (0.45, 0.1), (0.4, 0.9), (0.49, 0.62)] {
            let r = m.region(t, x).unwrap();
            for k in 0..=50 {
                let tau = t * k as f64 / 50.0;
                assert!(r.gamma1(tau) <= r.gamma2(tau) + 1e-14);
            }
            assert!((r.gamma1(t) - r.gamma2(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn front_validation() {
        assert!(Front::new(vec![(0.0, -1.0)], 1.0).is_err());
        assert!(Front::new(vec![(0.1, 1.0)], 1.0).is_err());
        assert!(Front::new(vec![(0.0, 1.0), (1.0, 0.5)], 1.0).is_err()); // decreasing
        assert!(Front::new(vec![(0.0, 1.0), (1.0, 2.5)], 1.0).is_err()); // supersonic
    }
}
