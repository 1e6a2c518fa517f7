//! Uniformly sampled scalar functions of one variable, interpreted as
//! piecewise-linear interpolants.
//!
//! Initial data, boundary loads and toughness profiles all enter the solver
//! in this form. Cumulative integrals are prefix sums of the trapezoid rule
//! and are exact for the interpolant, including partial cells.

use crate::error::{Error, Result};
use crate::pwlinear::Side;

/// Relative slack accepted on domain checks; absorbs grid-arithmetic noise
/// (`n * dx` vs the nominal endpoint differ by a few ulp).
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SampledFunction {
    a: f64,
    dx: f64,
    values: Vec<f64>,
    /// Derivative samples at the knots; populated from a closure (exact) or
    /// by finite differences, see [`SampledFunction::derivative_samples`].
    deriv: Option<Vec<f64>>,
    /// Optional extra knot past the uniform span, used to carry a restart
    /// slice out to the exact front position (which is rarely grid-aligned).
    tail: Option<(f64, f64)>,
    prefix: Vec<f64>,
}

impl SampledFunction {
    pub fn new(a: f64, b: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Structural("sampled function needs >= 2 knots".into()));
        }
        if !(b > a) {
            return Err(Error::Structural("sampled function needs b > a".into()));
        }
        let dx = (b - a) / (values.len() - 1) as f64;
        let mut f = Self { a, dx, values, deriv: None, tail: None, prefix: Vec::new() };
        f.rebuild_prefix();
        Ok(f)
    }

    pub fn from_fn(a: f64, b: f64, n_cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = (b - a) / n_cells as f64;
        let values = (0..=n_cells).map(|i| f(a + i as f64 * dx)).collect();
        Self::new(a, b, values)
    }

    pub fn with_derivative_fn(mut self, df: impl Fn(f64) -> f64) -> Self {
        let d = (0..self.values.len()).map(|i| df(self.a + i as f64 * self.dx)).collect();
        self.deriv = Some(d);
        self
    }

    pub fn with_derivative_samples(mut self, d: Vec<f64>) -> Result<Self> {
        if d.len() != self.values.len() {
            return Err(Error::Structural("derivative sample count mismatch".into()));
        }
        self.deriv = Some(d);
        Ok(self)
    }

    /// Appends one knot `(x_tail, y_tail)` past `b`; `x_tail` must exceed `b`.
    pub fn with_tail(mut self, x_tail: f64, y_tail: f64) -> Result<Self> {
        if x_tail <= self.b() {
            return Err(Error::Structural("tail knot must lie beyond the grid".into()));
        }
        self.tail = Some((x_tail, y_tail));
        Ok(self)
    }

    pub fn zero(a: f64, b: f64, n_cells: usize) -> Self {
        Self::from_fn(a, b, n_cells, |_| 0.0).unwrap().with_derivative_fn(|_| 0.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.a + self.dx * (self.values.len() - 1) as f64
    }

    /// Domain end including the tail knot, if any.
    pub fn end(&self) -> f64 {
        self.tail.map_or(self.b(), |(x, _)| x)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn rebuild_prefix(&mut self) {
        let n = self.values.len();
        let mut p = Vec::with_capacity(n);
        p.push(0.0);
        for i in 1..n {
            let cell = 0.5 * (self.values[i - 1] + self.values[i]) * self.dx;
            p.push(p[i - 1] + cell);
        }
        self.prefix = p;
    }

    fn locate(&self, x: f64, what: &str) -> Result<(usize, f64)> {
        let span = self.end() - self.a;
        let slack = DOMAIN_SLACK * (1.0 + span.abs() + self.a.abs());
        if x < self.a - slack || x > self.end() + slack {
            return Err(Error::Domain(format!(
                "{what}: {x} outside [{}, {}]",
                self.a,
                self.end()
            )));
        }
        let u = ((x - self.a) / self.dx).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (u.floor() as usize).min(self.values.len() - 2);
        Ok((i, x - (self.a + i as f64 * self.dx)))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if let Some((xt, yt)) = self.tail {
            if x > self.b() {
                let span = xt - self.a;
                if x > xt + DOMAIN_SLACK * (1.0 + span.abs()) {
                    return Err(Error::Domain(format!("eval: {x} beyond tail {xt}")));
                }
                let (b, yb) = (self.b(), *self.values.last().unwrap());
                let s = ((x - b) / (xt - b)).clamp(0.0, 1.0);
                return Ok(yb + s * (yt - yb));
            }
        }
        let (i, off) = self.locate(x, "eval")?;
        let s = (off / self.dx).clamp(0.0, 1.0);
        Ok(self.values[i] + s * (self.values[i + 1] - self.values[i]))
    }

    /// Derivative samples at the knots: user-supplied when present, otherwise
    /// central finite differences (one-sided at the endpoints).
    pub fn derivative_samples(&self) -> Vec<f64> {
        if let Some(d) = &self.deriv {
            return d.clone();
        }
        let n = self.values.len();
        let v = &self.values;
        let mut d = vec![0.0; n];
        d[0] = (v[1] - v[0]) / self.dx;
        d[n - 1] = (v[n - 1] - v[n - 2]) / self.dx;
        for i in 1..n - 1 {
            d[i] = (v[i + 1] - v[i - 1]) / (2.0 * self.dx);
        }
        d
    }

    /// Derivative of the smoothed representative: linear interpolation of the
    /// knot derivative samples, with a side choice at the knots themselves.
    pub fn deriv_eval(&self, x: f64, side: Side) -> Result<f64> {
        let d = self.derivative_samples();
        if let Some((xt, yt)) = self.tail {
            if x > self.b() {
                // tail slope is the interpolant's own slope there
                let _ = side;
                let span = xt - self.a;
                if x > xt + DOMAIN_SLACK * (1.0 + span.abs()) {
                    return Err(Error::Domain(format!("deriv: {x} beyond tail {xt}")));
                }
                return Ok((yt - *self.values.last().unwrap()) / (xt - self.b()));
            }
        }
        let (mut i, mut off) = self.locate(x, "deriv")?;
        if side == Side::Left && i > 0 && off <= 0.0 {
            i -= 1;
            off = self.dx;
        }
        let s = (off / self.dx).clamp(0.0, 1.0);
        Ok(d[i] + s * (d[i + 1] - d[i]))
    }

    /// Exact integral of the interpolant from `a` to `x` (quadratic inside a
    /// cell, trapezoid prefix across cells).
    pub fn integral_from_a(&self, x: f64) -> Result<f64> {
        if let Some((xt, yt)) = self.tail {
            if x > self.b() {
                let span = xt - self.a;
                if x > xt + DOMAIN_SLACK * (1.0 + span.abs()) {
                    return Err(Error::Domain(format!("integral: {x} beyond tail {xt}")));
                }
                let (b, yb) = (self.b(), *self.values.last().unwrap());
                let w = (x - b).clamp(0.0, xt - b);
                let y_here = yb + (w / (xt - b)) * (yt - yb);
                return Ok(*self.prefix.last().unwrap() + 0.5 * (yb + y_here) * w);
            }
        }
        let (i, off) = self.locate(x, "integral")?;
        let w = off.clamp(0.0, self.dx);
        let s = w / self.dx;
        let y_here = self.values[i] + s * (self.values[i + 1] - self.values[i]);
        Ok(self.prefix[i] + 0.5 * (self.values[i] + y_here) * w)
    }

    /// `\int_{x0}^{x1}` of the interpolant (signed).
    pub fn integral(&self, x0: f64, x1: f64) -> Result<f64> {
        Ok(self.integral_from_a(x1)? - self.integral_from_a(x0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knot_eval_is_exact() {
        let f = SampledFunction::from_fn(0.0, 1.0, 100, |x| (std::f64::consts::PI * x).sin())
            .unwrap();
        for i in 0..=100 {
            let x = i as f64 * 0.01;
            let expect = (std::f64::consts::PI * x).sin();
            assert!((f.eval(x).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn domain_error_outside() {
        let f = SampledFunction::zero(0.0, 1.0, 4);
        assert!(f.eval(1.1).is_err());
        assert!(f.eval(-0.1).is_err());
        // grid-arithmetic slack is accepted
        assert!(f.eval(1.0 + 1e-12).is_ok());
    }

    #[test]
    fn prefix_integral_exact_for_linear() {
        let f = SampledFunction::from_fn(0.0, 2.0, 8, |x| 3.0 * x).unwrap();
        // integral of 3x from 0 to x is 1.5 x^2, exact for the interpolant
        for &x in &[0.25, 0.3, 1.0, 1.9, 2.0] {
            assert!((f.integral_from_a(x).unwrap() - 1.5 * x * x).abs() < 1e-14);
        }
    }

    #[test]
    fn central_differences() {
        let f = SampledFunction::from_fn(0.0, 1.0, 10, |x| x * x).unwrap();
        let d = f.derivative_samples();
        // central difference of x^2 is exact
        assert!((d[5] - 1.0).abs() < 1e-14);
        // one-sided at the ends
        assert!((d[0] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn tail_knot() {
        let f = SampledFunction::from_fn(0.0, 1.0, 4, |x| x)
            .unwrap()
            .with_tail(1.3, 0.0)
            .unwrap();
        assert!((f.eval(1.15).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.integral_from_a(1.3).unwrap() - (0.5 + 0.15)).abs() < 1e-15);
        assert!(f.eval(1.4).is_err());
    }
}
