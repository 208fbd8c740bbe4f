use alloc::format;
use alloc::vec::Vec;

use crate::data::{l1_distance, CountSeries, Histogram, NoisySeries};
use crate::dp::{sample_laplace, split_budget, BudgetPart, Fraction, LaplaceScale, PrivacyBudget, RandomSource};
use crate::{Error, Result};

use super::direct::add_noise;
use super::Release;

/// One user moving between timestamps changes the L1 distance of adjacent
/// histograms by at most two.
pub const DISTANCE_SENSITIVITY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    /// Threshold `T` on the L1 distance to the previous release.
    pub threshold: f64,
    /// Cutoff `c`: maximum number of fresh releases.
    pub cutoff: usize,
    /// Share `ρ` of the budget spent on comparisons; the rest pays for releases.
    pub rho: f64,
}

impl ThresholdParams {
    pub fn new(threshold: f64, cutoff: usize, rho: f64) -> Self {
        ThresholdParams { threshold, cutoff, rho }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(Error::param("threshold", format!("must be finite and non-negative, got {}", self.threshold)));
        }
        if self.cutoff == 0 || self.cutoff > len {
            return Err(Error::param("cutoff", format!("must lie in 1..={len}, got {}", self.cutoff)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Same parameters with the cutoff limited to a shorter sequence.
    pub(crate) fn clamped_to(self, len: usize) -> Self {
        ThresholdParams { cutoff: self.cutoff.min(len).max(1), ..self }
    }
}

pub(crate) struct ThresholdOutcome {
    pub histograms: Vec<Histogram<f64>>,
    /// Local indices of fresh releases, including a final leftover release.
    pub fresh: Vec<usize>,
    /// Share of the caller's ε that was used.
    pub spent: Fraction,
    pub budget: PrivacyBudget,
}

/// Sparse-vector release over `histograms` with total budget `epsilon`.
///
/// Every fresh release costs `ε / c` (`ε_1 / c` for the comparison and `ε_2 / c`
/// for the noise). If the last timestamp is reached with `cnt < c`, it is released
/// with the leftover `ε_l = ε (c − cnt) / c`.
pub(crate) fn run_threshold(
    histograms: &[Histogram<u64>],
    epsilon: f64,
    params: ThresholdParams,
    rng: &mut RandomSource,
) -> Result<ThresholdOutcome> {
    let len = histograms.len();
    if len == 0 {
        return Err(Error::EmptySeries);
    }
    params.validate(len)?;
    let mut budget =
        split_budget(epsilon, &[(BudgetPart::Compare, params.rho), (BudgetPart::Perturb, 1.0 - params.rho)])?;
    let eps_compare = budget.epsilon(BudgetPart::Compare);
    let eps_perturb = budget.epsilon(BudgetPart::Perturb);
    let c = params.cutoff;
    let cf = c as f64;
    let share = Fraction::new(1, c as u64);

    let release_scale = LaplaceScale::calibrated(cf * DISTANCE_SENSITIVITY, eps_perturb)?;
    let threshold_scale = LaplaceScale::calibrated(cf * DISTANCE_SENSITIVITY, eps_compare)?;
    let query_scale = LaplaceScale::calibrated(2.0 * cf * DISTANCE_SENSITIVITY, eps_compare)?;

    let charge = |budget: &mut PrivacyBudget, s: Fraction| -> Result<()> {
        budget.charge(BudgetPart::Compare, s)?;
        budget.charge(BudgetPart::Perturb, s)
    };

    let mut out = Vec::with_capacity(len);
    let mut fresh = Vec::new();
    out.push(add_noise(&histograms[0], release_scale, rng));
    fresh.push(0);
    let mut noisy_threshold = params.threshold + sample_laplace(threshold_scale, rng);
    let mut cnt = 1usize;
    charge(&mut budget, share)?;
    let mut spent = share;

    for i in 1..len {
        if cnt >= c {
            let previous = out[i - 1].clone();
            out.push(previous);
            continue;
        }
        if i == len - 1 {
            let left = Fraction::new((c - cnt) as u64, c as u64);
            let leftover = left.of(epsilon);
            let scale = LaplaceScale::calibrated(DISTANCE_SENSITIVITY, leftover)?;
            out.push(add_noise(&histograms[i], scale, rng));
            fresh.push(i);
            charge(&mut budget, left)?;
            spent = spent + left;
            continue;
        }
        let distance = l1_distance(&out[i - 1], &histograms[i])? + sample_laplace(query_scale, rng);
        if distance >= noisy_threshold {
            out.push(add_noise(&histograms[i], release_scale, rng));
            fresh.push(i);
            cnt += 1;
            charge(&mut budget, share)?;
            spent = spent + share;
            noisy_threshold = params.threshold + sample_laplace(threshold_scale, rng);
        } else {
            let previous = out[i - 1].clone();
            out.push(previous);
        }
    }
    Ok(ThresholdOutcome { histograms: out, fresh, spent, budget })
}

/// Threshold perturbation of a whole series.
pub fn threshold_perturb(
    series: &CountSeries,
    epsilon: f64,
    params: ThresholdParams,
    rng: &mut RandomSource,
) -> Result<Release> {
    let outcome = run_threshold(series.histograms(), epsilon, params, rng)?;
    Ok(Release {
        series: NoisySeries::new(outcome.histograms, series.interval_s())?,
        budget: outcome.budget,
        division: None,
        fresh: outcome.fresh,
        fallback: false,
    })
}
