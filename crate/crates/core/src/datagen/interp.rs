//! Fritsch-Carlson monotone piecewise-cubic Hermite interpolation.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Fits the interpolant. `xs` must be strictly increasing and `ys`
    /// non-decreasing.
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Shape(format!("{} abscissae but {} ordinates", xs.len(), ys.len())));
        }
        if xs.len() < 2 {
            return Err(Error::Domain("need at least two control points".into()));
        }
        if xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control point".into()));
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!(
                "control abscissae must be strictly increasing (x[{i}] = {}, x[{}] = {})",
                xs[i],
                i + 1,
                xs[i + 1]
            )));
        }
        if let Some(i) = ys.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Monotonicity(format!(
                "control ordinates decrease between {i} and {}",
                i + 1
            )));
        }

        let n = xs.len();
        let secants: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();

        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secants[i - 1], secants[i]);
            slopes[i] = if a * b <= 0.0 { 0.0 } else { 0.5 * (a + b) };
        }

        for i in 0..n - 1 {
            let d = secants[i];
            if d == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let alpha = slopes[i] / d;
            let beta = slopes[i + 1] / d;
            let r2 = alpha * alpha + beta * beta;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                slopes[i] = tau * alpha * d;
                slopes[i + 1] = tau * beta * d;
            }
        }

        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&x) {
            return Err(Error::Domain(format!("query {x} outside [{lo}, {hi}]")));
        }
        // Index of the interval [xs[i], xs[i+1]] holding x.
        let i = self
            .xs
            .partition_point(|&xi| xi <= x)
            .saturating_sub(1)
            .min(self.xs.len() - 2);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1])
    }
}

pub fn monotone_cubic_interpolate(ctrl_x: &[f64], ctrl_y: &[f64], query_x: &[f64]) -> Result<Vec<f64>> {
    let interp = MonotoneCubic::new(ctrl_x, ctrl_y)?;
    query_x.iter().map(|&x| interp.eval(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_segment() {
        let y = monotone_cubic_interpolate(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn hits_control_points_exactly() {
        let xs = [0.0, 1.5, 4.0, 7.25, 10.0];
        let ys = [0.0, 0.01, 0.05, 0.05, 0.09];
        let y = monotone_cubic_interpolate(&xs, &ys, &xs).unwrap();
        assert_eq!(y, ys.to_vec());
    }

    #[test]
    fn collinear_controls_reproduce_line() {
        let xs = [0.0, 2.0, 3.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.25 * x + 1.0).collect();
        let interp = MonotoneCubic::new(&xs, &ys).unwrap();
        for x in (0..=70).map(|i| i as f64 / 10.0) {
            assert!((interp.eval(x).unwrap() - (0.25 * x + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn error_cases() {
        assert!(matches!(MonotoneCubic::new(&[0.0, 0.0, 1.0], &[0.0, 1.0, 2.0]), Err(Error::Domain(_))));
        assert!(matches!(MonotoneCubic::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.5]), Err(Error::Monotonicity(_))));
        assert!(matches!(monotone_cubic_interpolate(&[0.0, 1.0], &[0.0, 1.0], &[1.5]), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn monotone_on_dense_grid(
            dx in prop::collection::vec(1e-3f64..5.0, 1..8),
            dy in prop::collection::vec(0.0f64..3.0, 8),
        ) {
            let mut xs = vec![0.0];
            for d in &dx { xs.push(xs.last().unwrap() + d); }
            let mut ys = vec![0.0];
            for d in dy.iter().take(dx.len()) { ys.push(ys.last().unwrap() + d); }
            let interp = MonotoneCubic::new(&xs, &ys).unwrap();
            let (lo, hi) = interp.domain();
            let q: Vec<f64> = (0..=2000).map(|i| (lo + (hi - lo) * i as f64 / 2000.0).min(hi)).collect();
            let v: Vec<f64> = q.iter().map(|&x| interp.eval(x).unwrap()).collect();
            let min_step = v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            prop_assert!(min_step >= -1e-12);
        }
    }
}
