//! Piecewise cubic Hermite interpolation from values and slopes.

use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteTable {
    z: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl HermiteTable {
    pub fn new(z: Vec<f64>, y: Vec<f64>, dy: Vec<f64>) -> Result<Self, NumericsError> {
        if z.len() < 2 || y.len() != z.len() || dy.len() != z.len() {
            return Err(NumericsError::InvalidConfig("hermite table needs matching lengths >= 2".into()));
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NumericsError::InvalidConfig("hermite abscissae must increase".into()));
        }
        Ok(Self { z, y, dy })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    fn cell(&self, x: f64) -> usize {
        let n = self.z.len();
        match self.z.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value and first derivative at `x`; outside the table the end cubic is extended.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let i = self.cell(x);
        let (z0, z1) = (self.z[i], self.z[i + 1]);
        let h = z1 - z0;
        let t = (x - z0) / h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.dy[i] * h, self.dy[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let slope = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (value, slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let df = |x: f64| -2.0 + 1.5 * x * x;
        let z: Vec<f64> = vec![0.0, 0.3, 1.0, 1.7];
        let t = HermiteTable::new(z.clone(), z.iter().map(|&x| f(x)).collect(), z.iter().map(|&x| df(x)).collect())
            .unwrap();
        for x in [0.1, 0.5, 0.99, 1.3] {
            let (v, d) = t.eval_with_derivative(x);
            assert!((v - f(x)).abs() < 1e-13);
            assert!((d - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_order_on_sine() {
        let err = |n: usize| {
            let z: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64 * 3.0).collect();
            let t = HermiteTable::new(z.clone(), z.iter().map(|x| x.sin()).collect(), z.iter().map(|x| x.cos()).collect())
                .unwrap();
            (0..1000).map(|i| i as f64 * 0.003 + 0.0001).map(|x| (t.eval(x) - x.sin()).abs()).fold(0.0, f64::max)
        };
        assert!(err(20) / err(40) > 12.0);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(HermiteTable::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }
}
