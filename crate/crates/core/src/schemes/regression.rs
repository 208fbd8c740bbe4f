use alloc::format;

use crate::{Error, Result};

/// `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Fits `y = θ⁰ + θ¹ x` by batch gradient descent on the half mean squared error,
/// `θ := θ + β · mean((y − h(x)) · (1, x))`, starting from zero.
///
/// Stops early once an update no longer changes either parameter.
pub fn fit_line(points: &[(f64, f64)], beta: f64, iterations: usize) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::TooFewDays { needed: 2, found: points.len() });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::param("beta", format!("must be positive, got {beta}")));
    }
    if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::param("history", "contains non-finite values"));
    }
    let n = points.len() as f64;
    let (mut theta0, mut theta1) = (0.0f64, 0.0f64);
    for _ in 0..iterations {
        let (mut g0, mut g1) = (0.0, 0.0);
        for &(x, y) in points {
            let residual = y - (theta0 + theta1 * x);
            g0 += residual;
            g1 += residual * x;
        }
        let next0 = theta0 + beta * g0 / n;
        let next1 = theta1 + beta * g1 / n;
        if !(next0.is_finite() && next1.is_finite()) {
            return Err(Error::Divergence { beta });
        }
        let settled = next0 == theta0 && next1 == theta1;
        theta0 = next0;
        theta1 = next1;
        if settled {
            break;
        }
    }
    Ok(LinearFit { intercept: theta0, slope: theta1 })
}

/// Two regressions, one per division point, over the day index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionModel {
    pub first: LinearFit,
    pub second: LinearFit,
    pub days: usize,
}

impl DivisionModel {
    /// Predicted `(t̂_1, t̂_2)` for day `x`, unrounded.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        (self.first.predict(x), self.second.predict(x))
    }

    /// Prediction for the day after the history.
    pub fn predict_next(&self) -> (f64, f64) {
        self.predict((self.days + 1) as f64)
    }
}

/// Fits both division points against the day index from `(day, t1, t2)` triples.
pub fn fit_divisions(history: &[(f64, f64, f64)], beta: f64, iterations: usize) -> Result<DivisionModel> {
    if history.len() < 2 {
        return Err(Error::TooFewDays { needed: 2, found: history.len() });
    }
    let firsts: alloc::vec::Vec<(f64, f64)> = history.iter().map(|&(h, t1, _)| (h, t1)).collect();
    let seconds: alloc::vec::Vec<(f64, f64)> = history.iter().map(|&(h, _, t2)| (h, t2)).collect();
    Ok(DivisionModel {
        first: fit_line(&firsts, beta, iterations)?,
        second: fit_line(&seconds, beta, iterations)?,
        days: history.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let model = fit_divisions(&[(1.0, 5.0, 5.0), (2.0, 7.0, 7.0), (3.0, 9.0, 9.0)], 0.05, 200_000).unwrap();
        assert!((model.first.intercept - 3.0).abs() < 1e-9);
        assert!((model.first.slope - 2.0).abs() < 1e-9);
        assert_eq!(libm::round(model.predict(4.0).0), 11.0);
    }

    #[test]
    fn constant_target() {
        let fit = fit_line(&[(1.0, 6.0), (2.0, 6.0), (3.0, 6.0), (4.0, 6.0)], 0.05, 200_000).unwrap();
        assert!((fit.intercept - 6.0).abs() < 1e-9);
        assert!(fit.slope.abs() < 1e-9);
        assert!((fit.predict(5.0) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_line(&[(1.0, 1.0)], 0.1, 10), Err(Error::TooFewDays { .. })));
        assert!(fit_line(&[(1.0, 1.0), (2.0, 2.0)], 0.0, 10).is_err());
        assert!(matches!(fit_line(&[(1.0, 1.0), (2.0, 3.0), (30.0, 2.0)], 5.0, 10_000), Err(Error::Divergence { .. })));
    }
}
