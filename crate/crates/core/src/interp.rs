//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Carlson).
//!
//! Monotone data stay monotone between nodes and positive data stay positive,
//! which is what tabulated CDFs and volatility profiles need.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Pchip {
    /// Builds the interpolant, computing slopes with the Fritsch–Carlson limiter.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_nodes(&xs, &ys)?;
        let ds = fritsch_carlson(&xs, &ys);
        Ok(Self { xs, ys, ds })
    }

    /// Builds the interpolant from caller-supplied node derivatives.
    pub fn with_derivatives(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> Result<Self> {
        check_nodes(&xs, &ys)?;
        if ds.len() != xs.len() || ds.iter().any(|d| !d.is_finite()) {
            return Err(Error::param(
                "table",
                "derivative column must match nodes and be finite",
            ));
        }
        Ok(Self { xs, ys, ds })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.ds
    }

    /// Value at `x`, clamped to the end values outside the table.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// Value and first derivative at `x`. Outside the table the value is
    /// clamped and the derivative is zero.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        if x < self.xs[0] {
            return (self.ys[0], 0.0);
        }
        if x > self.xs[n - 1] {
            return (self.ys[n - 1], 0.0);
        }
        let k = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => return (self.ys[i], self.ds[i]),
            Err(i) => i - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (y0, y1, d0, d1) = (self.ys[k], self.ys[k + 1], self.ds[k], self.ds[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * h * d0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * h * d1)
            / h;
        (v, dv)
    }
}

fn check_nodes(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::param("table", "need at least two rows of equal length"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::param("table", "non-finite entry"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("table", "nodes must be strictly increasing"));
    }
    Ok(())
}

fn fritsch_carlson(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            // weighted harmonic mean
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data_exactly() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let p = Pchip::new(xs, ys).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let (v, d) = p.eval_with_derivative(x);
            assert!((v - (2.0 * x + 1.0)).abs() < 1e-13);
            assert!((d - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_data_stay_monotone() {
        let xs = vec![0.0, 0.1, 0.2, 0.5, 0.6, 1.0];
        let ys = vec![0.0, 0.0, 0.5, 0.51, 0.9, 1.0];
        let p = Pchip::new(xs, ys).unwrap();
        let mut prev = p.eval(0.0);
        for i in 1..=1000 {
            let v = p.eval(i as f64 / 1000.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn clamps_outside_table() {
        let p = Pchip::new(vec![0.0, 1.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(p.eval(-1.0), 2.0);
        assert_eq!(p.eval(5.0), 3.0);
    }

    #[test]
    fn rejects_unsorted_nodes() {
        assert!(Pchip::new(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
    }
}
