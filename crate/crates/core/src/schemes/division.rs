use alloc::format;
use alloc::vec::Vec;

use crate::data::{adjacent_distances, CellValue, CountSeries};
use crate::dp::{exponential_select, RandomSource};
use crate::{Error, Result};

/// Inclusive, zero-based daytime window `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DivisionPoints {
    pub start: usize,
    pub end: usize,
}

impl DivisionPoints {
    pub fn new(start: usize, end: usize) -> Self {
        DivisionPoints { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    /// Timestamps of `0..total` before, inside and after the window.
    pub fn segments(&self, total: usize) -> [core::ops::Range<usize>; 3] {
        [0..self.start, self.start..self.end + 1, self.end + 1..total]
    }
}

/// Components of the division utility for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionUtility {
    /// Mean adjacent distance, normalised by the window length `j − i + 1`.
    pub ave_dis: f64,
    /// Mean absolute deviation of the adjacent distances from `ave_dis`, floored at 1.
    pub sim_var: f64,
    /// `log_α(j − i + 1) · ave_dis / sim_var`.
    pub utility: f64,
    /// `2 log_α S`.
    pub sensitivity: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::param("alpha", format!("must be finite and greater than 1, got {alpha}")));
    }
    Ok(())
}

fn log_base(x: f64, alpha: f64) -> f64 {
    libm::log(x) / libm::log(alpha)
}

/// Sensitivity `2 log_α S` of the division utility.
pub fn utility_sensitivity(len: usize, alpha: f64) -> f64 {
    2.0 * log_base(len as f64, alpha)
}

/// Utility of window `[start, end]` given the adjacent distances of the series.
fn utility_from_distances(distances: &[f64], start: usize, end: usize, alpha: f64) -> (f64, f64, f64) {
    if start == end {
        return (0.0, 1.0, 0.0);
    }
    let n = (end - start + 1) as f64;
    let window = &distances[start..end];
    let ave_dis = window.iter().sum::<f64>() / n;
    let deviation = window.iter().map(|d| libm::fabs(ave_dis - d)).sum::<f64>() / n;
    let sim_var = if deviation < 1.0 { 1.0 } else { deviation };
    (ave_dis, sim_var, log_base(n, alpha) * ave_dis / sim_var)
}

/// Utility `U(start, end)` of treating `[start, end]` as the daytime window.
pub fn division_utility<T: CellValue>(
    series: &crate::data::AggregatedSeries<T>,
    start: usize,
    end: usize,
    alpha: f64,
) -> Result<DivisionUtility> {
    check_alpha(alpha)?;
    let len = series.len();
    if start > end || end >= len {
        return Err(Error::WindowOutOfRange { start, end, len });
    }
    let sensitivity = utility_sensitivity(len, alpha);
    if start == end {
        return Ok(DivisionUtility { ave_dis: 0.0, sim_var: 1.0, utility: 0.0, sensitivity });
    }
    let distances = adjacent_distances(series)?.distances;
    let (ave_dis, sim_var, utility) = utility_from_distances(&distances, start, end, alpha);
    Ok(DivisionUtility { ave_dis, sim_var, utility, sensitivity })
}

/// Utilities of every window `start <= end`, enumerated by start then end.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    windows: Vec<DivisionPoints>,
    utilities: Vec<f64>,
    sensitivity: f64,
}

impl UtilityTable {
    pub fn new<T: CellValue>(series: &crate::data::AggregatedSeries<T>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let len = series.len();
        if len == 0 {
            return Err(Error::EmptySeries);
        }
        let distances = if len > 1 { adjacent_distances(series)?.distances } else { Vec::new() };
        let mut windows = Vec::with_capacity(len * (len + 1) / 2);
        let mut utilities = Vec::with_capacity(len * (len + 1) / 2);
        for start in 0..len {
            for end in start..len {
                windows.push(DivisionPoints::new(start, end));
                utilities.push(utility_from_distances(&distances, start, end, alpha).2);
            }
        }
        Ok(UtilityTable { windows, utilities, sensitivity: utility_sensitivity(len, alpha) })
    }

    pub fn windows(&self) -> &[DivisionPoints] {
        &self.windows
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Window with the largest utility (first one on ties).
    pub fn argmax(&self) -> DivisionPoints {
        let mut best = 0;
        for (k, &u) in self.utilities.iter().enumerate() {
            if u > self.utilities[best] {
                best = k;
            }
        }
        self.windows[best]
    }

    /// Exponential-mechanism draw over all windows.
    pub fn select(&self, epsilon_s: f64, rng: &mut RandomSource) -> Result<DivisionPoints> {
        if self.windows.len() == 1 {
            return Ok(self.windows[0]);
        }
        let k = exponential_select(&self.utilities, epsilon_s, self.sensitivity, rng)?;
        Ok(self.windows[k])
    }
}

/// Privately selects the daytime window with budget `ε_s`.
pub fn select_division(
    series: &CountSeries,
    epsilon_s: f64,
    alpha: f64,
    rng: &mut RandomSource,
) -> Result<DivisionPoints> {
    if !(epsilon_s.is_finite() && epsilon_s > 0.0) {
        return Err(Error::param("epsilon_s", format!("must be positive, got {epsilon_s}")));
    }
    UtilityTable::new(series, alpha)?.select(epsilon_s, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample() -> CountSeries {
        CountSeries::from_rows(vec![vec![0, 2], vec![2, 0], vec![2, 0]], 60).unwrap()
    }

    #[test]
    fn single_timestamp_window_is_zero() {
        let u = division_utility(&sample(), 1, 1, 12.0).unwrap();
        assert_eq!(u.utility, 0.0);
        assert_eq!(u.sim_var, 1.0);
    }

    #[test]
    fn hand_evaluated_window() {
        // distances [4, 0]; aveDis = 4/3; deviations |4/3 - 4| + |4/3 - 0| = 4, / 3 = 4/3
        let u = division_utility(&sample(), 0, 2, 12.0).unwrap();
        assert!((u.ave_dis - 4.0 / 3.0).abs() < 1e-15);
        assert!((u.sim_var - 4.0 / 3.0).abs() < 1e-15);
        let expected = libm::log(3.0) / libm::log(12.0);
        assert!((u.utility - expected).abs() < 1e-12);
    }

    #[test]
    fn small_deviation_is_floored() {
        // distances [2, 2]: aveDis = 4/3, deviation = (2/3 + 2/3) / 3 = 4/9 -> 1
        let s = CountSeries::from_rows(vec![vec![1, 0], vec![0, 1], vec![1, 0]], 60).unwrap();
        let u = division_utility(&s, 0, 2, 12.0).unwrap();
        assert_eq!(u.sim_var, 1.0);
        assert!((u.utility - libm::log(3.0) / libm::log(12.0) * 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn window_errors() {
        assert!(division_utility(&sample(), 2, 1, 12.0).is_err());
        assert!(division_utility(&sample(), 0, 3, 12.0).is_err());
        assert!(division_utility(&sample(), 0, 1, 1.0).is_err());
    }

    #[test]
    fn single_timestamp_series_selects_only_window() {
        let s = CountSeries::from_rows(vec![vec![3, 4]], 60).unwrap();
        let mut rng = RandomSource::new(1, 0);
        assert_eq!(select_division(&s, 0.1, 12.0, &mut rng).unwrap(), DivisionPoints::new(0, 0));
    }

    #[test]
    fn table_matches_single_evaluations() {
        let s = sample();
        let table = UtilityTable::new(&s, 12.0).unwrap();
        assert_eq!(table.windows().len(), 6);
        for (w, &u) in table.windows().iter().zip(table.utilities()) {
            assert_eq!(division_utility(&s, w.start, w.end, 12.0).unwrap().utility, u);
        }
    }

    #[test]
    fn segments_partition_the_day() {
        let w = DivisionPoints::new(3, 6);
        let [a, b, c] = w.segments(10);
        assert_eq!((a.start, a.end, b.start, b.end, c.start, c.end), (0, 3, 3, 7, 7, 10));
    }
}
