//! Piecewise-linear functions with exact evaluation, inversion and integration.
//!
//! The moving-boundary maps and the debonding front itself are piecewise
//! linear by construction, so everything here is exact up to rounding:
//! no quadrature or root-finding tolerances enter.

use crate::error::{Error, Result};

/// Which one-sided limit to take at a breakpoint of a piecewise-constant
/// derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A continuous piecewise-linear function given by its breakpoints.
/// Outside the breakpoint span it extrapolates with the first/last slope.
#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::Structural(
                "piecewise-linear: knot/value length mismatch or empty".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Structural(
                "piecewise-linear: knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { xs, ys })
    }

    pub fn constant(x0: f64, y0: f64) -> Self {
        Self { xs: vec![x0], ys: vec![y0] }
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn first(&self) -> (f64, f64) {
        (self.xs[0], self.ys[0])
    }

    pub fn last(&self) -> (f64, f64) {
        (*self.xs.last().unwrap(), *self.ys.last().unwrap())
    }

    /// Index of the segment containing `x` (clamped to the outer segments).
    fn segment(&self, x: f64) -> usize {
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(self.xs.len().saturating_sub(2)),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.xs.len() == 1 {
            return self.ys[0];
        }
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Slope of the segment on the requested side of `x`.
    pub fn slope(&self, x: f64, side: Side) -> f64 {
        if self.xs.len() == 1 {
            return 0.0;
        }
        let mut i = self.segment(x);
        if side == Side::Left && i > 0 && x <= self.xs[i] {
            i -= 1;
        }
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn max_slope(&self) -> f64 {
        if self.xs.len() == 1 {
            return 0.0;
        }
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_slope(&self) -> f64 {
        if self.xs.len() == 1 {
            return 0.0;
        }
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Exact inverse for strictly increasing functions. Errors if some
    /// segment is flat (slope <= 0).
    pub fn inverse(&self) -> Result<PiecewiseLinear> {
        if self.min_slope() <= 0.0 && self.xs.len() > 1 {
            return Err(Error::Structural(
                "piecewise-linear inverse requires strictly positive slopes".into(),
            ));
        }
        PiecewiseLinear::new(self.ys.clone(), self.xs.clone())
    }

    /// First `x >= lo` with `eval(x) = target`, scanning upward from below.
    /// `hi` may be infinite; the extrapolated tail is solved analytically.
    pub fn first_crossing(&self, target: f64, lo: f64, hi: f64) -> Option<f64> {
        let mut xs: Vec<f64> = vec![lo];
        xs.extend(self.xs.iter().copied().filter(|&k| k > lo && k < hi));
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a) - target, self.eval(b) - target);
            if fa == 0.0 {
                return Some(a);
            }
            if fa < 0.0 && fb >= 0.0 {
                return Some(a - fa * (b - a) / (fb - fa));
            }
        }
        // tail segment beyond the last candidate point
        let a = *xs.last().unwrap();
        let fa = self.eval(a) - target;
        if fa == 0.0 {
            return Some(a);
        }
        let slope = self.slope(a, Side::Right);
        if fa < 0.0 && slope > 0.0 {
            let root = a - fa / slope;
            if root <= hi {
                return Some(root);
            }
        } else if hi.is_finite() {
            let fb = self.eval(hi) - target;
            if fa < 0.0 && fb >= 0.0 {
                return Some(a - fa * (hi - a) / (fb - fa));
            }
        }
        None
    }

    /// Composition `self(inner(.))`; exact, with knots at the preimages of
    /// both functions' breakpoints. `inner` must be strictly monotone.
    pub fn compose(&self, inner: &PiecewiseLinear) -> Result<PiecewiseLinear> {
        let inv = inner.inverse()?;
        let mut knots: Vec<f64> = inner.knots().to_vec();
        for &k in self.knots() {
            if k > inner.values().first().copied().unwrap_or(k)
                && k < inner.values().last().copied().unwrap_or(k)
            {
                knots.push(inv.eval(k));
            }
        }
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (1.0 + a.abs()));
        let vals = knots.iter().map(|&x| self.eval(inner.eval(x))).collect();
        PiecewiseLinear::new(knots, vals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_extrapolate() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(1.5), 2.5);
        // extrapolation keeps the boundary slope
        assert_eq!(f.eval(3.0), 4.0);
        assert_eq!(f.eval(-1.0), -2.0);
    }

    #[test]
    fn side_aware_slope() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.slope(1.0, Side::Left), 2.0);
        assert_eq!(f.slope(1.0, Side::Right), 1.0);
        assert_eq!(f.slope(0.5, Side::Left), 2.0);
    }

    #[test]
    fn inverse_round_trip() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![-1.0, 0.5, 2.0]).unwrap();
        let g = f.inverse().unwrap();
        for &x in &[0.0, 0.3, 1.0, 2.7, 3.0] {
            assert!((g.eval(f.eval(x)) - x).abs() <= 8.0 * f64::EPSILON * (1.0 + x.abs()));
        }
    }

    #[test]
    fn inverse_rejects_flat() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 1.0]).unwrap();
        assert!(f.inverse().is_err());
    }

    #[test]
    fn crossing() {
        let f = PiecewiseLinear::new(vec![0.0, 2.0], vec![-1.0, 1.0]).unwrap();
        assert_eq!(f.first_crossing(0.0, 0.0, 5.0), Some(1.0));
        assert_eq!(f.first_crossing(4.0, 0.0, 2.0), None);
    }
}
