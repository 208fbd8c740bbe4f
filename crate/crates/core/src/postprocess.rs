//! Consistency post-processing of noisy releases.
//!
//! Each noisy histogram is rounded (half away from zero), negative cells are
//! zeroed and their total mass is removed again one unit at a time from uniformly
//! chosen positive cells. The result is a non-negative integer histogram whose
//! total equals `max(0, Σ round(ỹ))`. No budget is consumed.

use alloc::vec::Vec;

use crate::data::{CountSeries, Histogram, NoisySeries};
use crate::dp::RandomSource;
use crate::metrics::mae;
use crate::{Error, Result};

/// Post-processes one noisy histogram.
pub fn postprocess_histogram(noisy: &[f64], rng: &mut RandomSource) -> Result<Histogram<u64>> {
    let mut rounded = Vec::with_capacity(noisy.len());
    for (cell, &v) in noisy.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonIntegral { timestamp: 0, cell, value: v });
        }
        rounded.push(libm::round(v));
    }
    let mut debt: f64 = rounded.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let mut counts: Vec<u64> = rounded.iter().map(|&v| if v > 0.0 { v as u64 } else { 0 }).collect();
    let mut positive: Vec<usize> = (0..counts.len()).filter(|&m| counts[m] > 0).collect();
    while debt > 0.0 && !positive.is_empty() {
        let k = rng.index(positive.len());
        let m = positive[k];
        counts[m] -= 1;
        debt -= 1.0;
        if counts[m] == 0 {
            positive.swap_remove(k);
        }
    }
    Ok(Histogram::new(counts))
}

/// Post-processes every timestamp of a noisy release.
pub fn consistency_postprocess(noisy: &NoisySeries, rng: &mut RandomSource) -> Result<CountSeries> {
    let histograms = noisy
        .histograms()
        .iter()
        .enumerate()
        .map(|(t, h)| {
            postprocess_histogram(h, rng).map_err(|e| match e {
                Error::NonIntegral { cell, value, .. } => Error::NonIntegral { timestamp: t, cell, value },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CountSeries::new(histograms, noisy.interval_s())
}

/// MAE against `raw` of `noisy` before and after post-processing.
pub fn postprocess_error_delta(raw: &CountSeries, noisy: &NoisySeries, rng: &mut RandomSource) -> Result<(f64, f64)> {
    raw.ensure_same_shape(noisy)?;
    let before = mae(raw, noisy)?.mean;
    let processed = consistency_postprocess(noisy, rng)?;
    let after = mae(raw, &processed)?.mean;
    Ok((before, after))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn integral_input_is_a_fixed_point() {
        let noisy = NoisySeries::from_rows(vec![vec![3.0, 0.0, 7.0], vec![1.0, 1.0, 0.0]], 60).unwrap();
        let mut rng = RandomSource::new(1, 0);
        let out = consistency_postprocess(&noisy, &mut rng).unwrap();
        assert_eq!(out, CountSeries::try_from_noisy(&noisy).unwrap());
    }

    #[test]
    fn hand_trace() {
        let mut rng = RandomSource::new(1, 0);
        let out = postprocess_histogram(&[2.6, -1.2, 0.2], &mut rng).unwrap();
        assert_eq!(out.counts(), &[2, 0, 0]);
    }

    #[test]
    fn all_negative_clamps_to_zero() {
        let mut rng = RandomSource::new(1, 0);
        let out = postprocess_histogram(&[-2.0, -3.0], &mut rng).unwrap();
        assert_eq!(out.counts(), &[0, 0]);
    }

    #[test]
    fn half_rounds_away_from_zero() {
        let mut rng = RandomSource::new(1, 0);
        assert_eq!(postprocess_histogram(&[0.5, 1.5, 2.4], &mut rng).unwrap().counts(), &[1, 2, 2]);
        // -0.5 rounds to -1, which is then taken from the positive cells
        assert_eq!(postprocess_histogram(&[-0.5, 2.0], &mut rng).unwrap().counts(), &[0, 1]);
    }

    #[test]
    fn error_delta_examples() {
        let raw = CountSeries::from_rows(vec![vec![0]], 60).unwrap();
        let noisy = NoisySeries::from_rows(vec![vec![-5.0]], 60).unwrap();
        let mut rng = RandomSource::new(1, 0);
        assert_eq!(postprocess_error_delta(&raw, &noisy, &mut rng).unwrap(), (5.0, 0.0));
        let same = raw.to_noisy();
        assert_eq!(postprocess_error_delta(&raw, &same, &mut rng).unwrap(), (0.0, 0.0));
        let wide = NoisySeries::from_rows(vec![vec![1.0, 2.0]], 60).unwrap();
        assert!(postprocess_error_delta(&raw, &wide, &mut rng).is_err());
    }

    #[test]
    fn non_finite_is_rejected() {
        let noisy = NoisySeries::from_rows(vec![vec![1.0], vec![f64::NAN]], 60).unwrap();
        let mut rng = RandomSource::new(1, 0);
        assert!(matches!(consistency_postprocess(&noisy, &mut rng), Err(Error::NonIntegral { timestamp: 1, .. })));
    }
}
