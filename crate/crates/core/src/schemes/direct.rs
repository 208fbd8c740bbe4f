use alloc::vec::Vec;

use crate::data::{CountSeries, Histogram, NoisySeries};
use crate::dp::{sample_laplace, BudgetPart, Fraction, LaplaceScale, PrivacyBudget, RandomSource};
use crate::Result;

use super::Release;

/// Removing one user's trajectory changes each histogram by one count.
pub const HISTOGRAM_SENSITIVITY: f64 = 1.0;

/// Adds Laplace(`len · Δ_H / ε`) noise to every cell of every histogram.
pub(crate) fn perturb_histograms(
    histograms: &[Histogram<u64>],
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<Vec<Histogram<f64>>> {
    let scale = LaplaceScale::calibrated(histograms.len() as f64 * HISTOGRAM_SENSITIVITY, epsilon)?;
    Ok(histograms.iter().map(|h| add_noise(h, scale, rng)).collect())
}

pub(crate) fn add_noise(histogram: &Histogram<u64>, scale: LaplaceScale, rng: &mut RandomSource) -> Histogram<f64> {
    Histogram::new(histogram.iter().map(|&c| c as f64 + sample_laplace(scale, rng)).collect())
}

/// Direct perturbation: each of the `S` histograms is released with budget `ε / S`.
pub fn direct_perturb(series: &CountSeries, epsilon: f64, rng: &mut RandomSource) -> Result<Release> {
    let mut budget = PrivacyBudget::single(epsilon, BudgetPart::Direct)?;
    let histograms = perturb_histograms(series.histograms(), epsilon, rng)?;
    budget.charge(BudgetPart::Direct, Fraction::ONE)?;
    Ok(Release {
        series: NoisySeries::new(histograms, series.interval_s())?,
        budget,
        division: None,
        fresh: Vec::new(),
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn vanishing_noise_keeps_counts() {
        let series = CountSeries::from_rows(vec![vec![4, 0, 9]], 60).unwrap();
        let mut rng = RandomSource::new(3, 0);
        let out = direct_perturb(&series, 1e9, &mut rng).unwrap();
        for (a, b) in out.series.get(0).iter().zip(series.get(0).iter()) {
            assert!((a - *b as f64).abs() < 1e-6);
        }
        assert_eq!(out.budget.consumed(), 1e9);
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let series = CountSeries::from_rows(vec![vec![1]], 60).unwrap();
        let mut rng = RandomSource::new(3, 0);
        assert!(direct_perturb(&series, 0.0, &mut rng).is_err());
        assert!(direct_perturb(&series, -1.0, &mut rng).is_err());
    }

    #[test]
    fn frozen_fixture() {
        let series = CountSeries::from_rows(vec![vec![1, 2, 3], vec![4, 5, 6]], 60).unwrap();
        let mut rng = RandomSource::new(11, 0);
        let out = direct_perturb(&series, 1.0, &mut rng).unwrap();
        let got: Vec<Vec<f64>> = out.series.histograms().iter().map(|h| h.to_vec()).collect();
        let frozen: Vec<Vec<f64>> = vec![
            vec![0.3243661603523964, -1.4217311594134836, 2.5302842667327536],
            vec![4.226134036732358, 3.260869400533527, 8.67766998442191],
        ];
        assert_eq!(got, frozen);
    }
}
