//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` must be strictly increasing with at least two knots.
    pub(crate) fn new(x: Vec<f64>, y: Vec<f64>) -> Option<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) || y.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for k in 1..n - 1 {
            m[k] = if d[k - 1] * d[k] <= 0.0 { 0.0 } else { 0.5 * (d[k - 1] + d[k]) };
        }
        for k in 0..n - 1 {
            if d[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / d[k];
            let b = m[k + 1] / d[k];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[k] = t * a * d[k];
                m[k + 1] = t * b * d[k];
            }
        }
        Some(Self { x, y, m })
    }

    pub(crate) fn scale_values(&mut self, factor: f64) {
        for v in self.y.iter_mut().chain(self.m.iter_mut()) {
            *v *= factor;
        }
    }

    pub(crate) fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Value and derivative; `None` outside the knot range.
    pub(crate) fn eval(&self, t: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let k = match self.x.partition_point(|&xk| xk <= t) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (y0, y1, m0, m1) = (self.y[k], self.y[k + 1], self.m[k] * h, self.m[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let deriv = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        Some((value, deriv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let sp = MonotoneCubic::new(vec![-1.0, 0.0, 2.0], vec![2.0, 0.0, -4.0]).unwrap();
        assert_eq!(sp.eval(0.0).unwrap().0, 0.0);
        let (v, d) = sp.eval(1.0).unwrap();
        assert!((v + 2.0).abs() < 1e-14 && (d + 2.0).abs() < 1e-14);
        assert!(sp.eval(2.5).is_none());
    }

    #[test]
    fn stays_monotone_on_steep_data() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let y = vec![0.0, -0.1, -0.2, -5.0, -5.1, -5.2, -9.0, -9.05];
        let sp = MonotoneCubic::new(x, y).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=7000 {
            let (v, d) = sp.eval(i as f64 * 1e-3).unwrap();
            assert!(v <= prev + 1e-15);
            assert!(d <= 1e-12);
            prev = v;
        }
    }
}
