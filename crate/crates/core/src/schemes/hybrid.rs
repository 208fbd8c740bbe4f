use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::data::{CountSeries, Histogram, NoisySeries};
use crate::dp::{BudgetPart, Fraction, PrivacyBudget, RandomSource};
use crate::{Error, Result};

use super::direct::perturb_histograms;
use super::division::{select_division, DivisionPoints};
use super::regression::{fit_divisions, DivisionModel};
use super::threshold::{run_threshold, ThresholdParams};
use super::Release;

/// `ε_s : ε_d : ε_t` for the static scheme.
pub const DEFAULT_STATIC_SPLIT: [(BudgetPart, f64); 3] =
    [(BudgetPart::Selection, 0.2), (BudgetPart::Direct, 0.4), (BudgetPart::Threshold, 0.4)];

/// `ε_d : ε_t1 : ε_t2` for the dynamic scheme.
pub const DEFAULT_DYNAMIC_SPLIT: [(BudgetPart, f64); 3] =
    [(BudgetPart::Direct, 0.5), (BudgetPart::NightBefore, 0.25), (BudgetPart::NightAfter, 0.25)];

/// Output slots filled segment by segment.
struct Assembly {
    slots: Vec<Option<Histogram<f64>>>,
    fresh: Vec<usize>,
}

impl Assembly {
    fn new(len: usize) -> Self {
        Assembly { slots: vec![None; len], fresh: Vec::new() }
    }

    fn place(&mut self, indices: &[usize], histograms: Vec<Histogram<f64>>) {
        for (&t, h) in indices.iter().zip(histograms) {
            self.slots[t] = Some(h);
        }
    }

    fn finish(self, interval_s: u64) -> Result<(NoisySeries, Vec<usize>)> {
        let histograms = self.slots.into_iter().map(|h| h.expect("every timestamp is released")).collect();
        let mut fresh = self.fresh;
        fresh.sort_unstable();
        Ok((NoisySeries::new(histograms, interval_s)?, fresh))
    }
}

/// Releases `indices` with threshold perturbation, charging `part` for what it spends.
#[allow(clippy::too_many_arguments)]
fn threshold_segment(
    series: &CountSeries,
    indices: &[usize],
    epsilon: f64,
    params: ThresholdParams,
    part: BudgetPart,
    budget: &mut PrivacyBudget,
    assembly: &mut Assembly,
    rng: &mut RandomSource,
) -> Result<()> {
    let outcome = run_threshold(&series.select(indices), epsilon, params.clamped_to(indices.len()), rng)?;
    budget.charge(part, outcome.spent)?;
    assembly.fresh.extend(outcome.fresh.iter().map(|&k| indices[k]));
    assembly.place(indices, outcome.histograms);
    Ok(())
}

fn direct_segment(
    series: &CountSeries,
    range: Range<usize>,
    epsilon: f64,
    assembly: &mut Assembly,
    rng: &mut RandomSource,
) -> Result<()> {
    let indices: Vec<usize> = range.clone().collect();
    let histograms = perturb_histograms(&series.histograms()[range], epsilon, rng)?;
    assembly.place(&indices, histograms);
    Ok(())
}

/// Static hybrid perturbation.
///
/// Selects the daytime window with `ε_s`, releases it with direct perturbation
/// under `ε_d`, and releases the remaining timestamps, concatenated into one
/// sequence, with threshold perturbation under `ε_t`. The cutoff is capped at the
/// length of that sequence. When the window covers the whole day, `ε_t` is handed
/// to the direct part.
pub fn static_hybrid(
    series: &CountSeries,
    budget: &PrivacyBudget,
    params: ThresholdParams,
    alpha: f64,
    rng: &mut RandomSource,
) -> Result<Release> {
    let mut budget = budget.clone();
    budget.require_parts(&[BudgetPart::Selection, BudgetPart::Direct, BudgetPart::Threshold])?;
    let len = series.len();
    params.validate(len)?;

    let division = select_division(series, budget.epsilon(BudgetPart::Selection), alpha, rng)?;
    budget.charge(BudgetPart::Selection, Fraction::ONE)?;

    let [before, day, after] = division.segments(len);
    let night: Vec<usize> = before.chain(after).collect();
    let mut assembly = Assembly::new(len);
    let mut direct_epsilon = budget.epsilon(BudgetPart::Direct);
    if night.is_empty() {
        direct_epsilon += budget.epsilon(BudgetPart::Threshold);
        budget.charge(BudgetPart::Threshold, Fraction::ONE)?;
    }
    direct_segment(series, day, direct_epsilon, &mut assembly, rng)?;
    budget.charge(BudgetPart::Direct, Fraction::ONE)?;
    if !night.is_empty() {
        let epsilon_t = budget.epsilon(BudgetPart::Threshold);
        threshold_segment(series, &night, epsilon_t, params, BudgetPart::Threshold, &mut budget, &mut assembly, rng)?;
    }

    let (series, fresh) = assembly.finish(series.interval_s())?;
    Ok(Release { series, budget, division: Some(division), fresh, fallback: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicParams {
    pub threshold: f64,
    /// Cutoff for the segment before the predicted window.
    pub cutoff_before: usize,
    /// Cutoff for the segment after the predicted window.
    pub cutoff_after: usize,
    pub rho: f64,
    pub alpha: f64,
    /// Gradient-descent learning rate.
    pub beta: f64,
    pub iterations: usize,
}

impl DynamicParams {
    pub fn new(threshold: f64, cutoff_before: usize, cutoff_after: usize, rho: f64) -> Self {
        DynamicParams {
            threshold,
            cutoff_before,
            cutoff_after,
            rho,
            alpha: super::DEFAULT_ALPHA,
            beta: 0.01,
            iterations: 200_000,
        }
    }
}

/// Division points of past days and the window predicted from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DivisionForecast {
    pub historical: Vec<DivisionPoints>,
    pub model: DivisionModel,
    /// Rounded and clamped prediction; `None` when the window inverts.
    pub predicted: Option<DivisionPoints>,
}

/// Selects a window on each historical day with budget `epsilon`, regresses the
/// two division points on the day index `1..=H`, and predicts day `H + 1` for a
/// day of `len` timestamps.
///
/// Historical days are treated as independent of the current one, so this
/// selection does not draw on the current day's budget.
pub fn predict_division(
    history: &[CountSeries],
    epsilon: f64,
    alpha: f64,
    beta: f64,
    iterations: usize,
    len: usize,
    rng: &mut RandomSource,
) -> Result<DivisionForecast> {
    if history.len() < 2 {
        return Err(Error::TooFewDays { needed: 2, found: history.len() });
    }
    if len == 0 {
        return Err(Error::EmptySeries);
    }
    let historical = history.iter().map(|day| select_division(day, epsilon, alpha, rng)).collect::<Result<Vec<_>>>()?;
    let triples: Vec<(f64, f64, f64)> =
        historical.iter().enumerate().map(|(h, w)| ((h + 1) as f64, w.start as f64, w.end as f64)).collect();
    let model = fit_divisions(&triples, beta, iterations)?;
    let (t1, t2) = model.predict_next();
    let clamp = |t: f64| libm::round(t).clamp(0.0, (len - 1) as f64) as usize;
    let (start, end) = (clamp(t1), clamp(t2));
    let predicted = (start <= end).then(|| DivisionPoints::new(start, end));
    Ok(DivisionForecast { historical, model, predicted })
}

/// Dynamic hybrid perturbation.
///
/// The daytime window is predicted from `history`; the current day is then split
/// into three segments released with threshold perturbation (`ε_t1`, `c1`), direct
/// perturbation (`ε_d`) and threshold perturbation (`ε_t2`, `c2`). Budget of an
/// empty night segment goes to the direct part. If the prediction inverts, the
/// whole day is released with direct perturbation under the full budget.
pub fn dynamic_hybrid(
    history: &[CountSeries],
    current: &CountSeries,
    budget: &PrivacyBudget,
    params: DynamicParams,
    rng: &mut RandomSource,
) -> Result<Release> {
    let mut budget = budget.clone();
    budget.require_parts(&[BudgetPart::Direct, BudgetPart::NightBefore, BudgetPart::NightAfter])?;
    let len = current.len();
    let before_params = ThresholdParams::new(params.threshold, params.cutoff_before, params.rho);
    let after_params = ThresholdParams::new(params.threshold, params.cutoff_after, params.rho);
    before_params.validate(len)?;
    after_params.validate(len)?;

    let forecast = predict_division(history, budget.total(), params.alpha, params.beta, params.iterations, len, rng)?;
    let mut assembly = Assembly::new(len);

    let Some(window) = forecast.predicted else {
        direct_segment(current, 0..len, budget.total(), &mut assembly, rng)?;
        for part in [BudgetPart::Direct, BudgetPart::NightBefore, BudgetPart::NightAfter] {
            budget.charge(part, Fraction::ONE)?;
        }
        let (series, fresh) = assembly.finish(current.interval_s())?;
        return Ok(Release { series, budget, division: None, fresh, fallback: true });
    };

    let [before, day, after] = window.segments(len);
    let mut direct_epsilon = budget.epsilon(BudgetPart::Direct);
    for (range, part) in [(&before, BudgetPart::NightBefore), (&after, BudgetPart::NightAfter)] {
        if range.is_empty() {
            direct_epsilon += budget.epsilon(part);
            budget.charge(part, Fraction::ONE)?;
        }
    }
    if !before.is_empty() {
        let indices: Vec<usize> = before.collect();
        let epsilon = budget.epsilon(BudgetPart::NightBefore);
        threshold_segment(
            current,
            &indices,
            epsilon,
            before_params,
            BudgetPart::NightBefore,
            &mut budget,
            &mut assembly,
            rng,
        )?;
    }
    direct_segment(current, day, direct_epsilon, &mut assembly, rng)?;
    budget.charge(BudgetPart::Direct, Fraction::ONE)?;
    if !after.is_empty() {
        let indices: Vec<usize> = after.collect();
        let epsilon = budget.epsilon(BudgetPart::NightAfter);
        threshold_segment(
            current,
            &indices,
            epsilon,
            after_params,
            BudgetPart::NightAfter,
            &mut budget,
            &mut assembly,
            rng,
        )?;
    }

    let (series, fresh) = assembly.finish(current.interval_s())?;
    Ok(Release { series, budget, division: Some(window), fresh, fallback: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::split_budget;

    fn day(len: usize, active: Range<usize>) -> CountSeries {
        let rows = (0..len)
            .map(|t| if active.contains(&t) && t % 2 == 1 { vec![0, 40, 10, 0] } else { vec![40, 0, 0, 10] })
            .collect();
        CountSeries::from_rows(rows, 3600).unwrap()
    }

    #[test]
    fn single_timestamp_static_hybrid_is_direct() {
        let series = CountSeries::from_rows(vec![vec![3, 1]], 60).unwrap();
        let budget = split_budget(0.8, &DEFAULT_STATIC_SPLIT).unwrap();
        let mut rng = RandomSource::new(2, 0);
        let out = static_hybrid(&series, &budget, ThresholdParams::new(1.0, 1, 0.5), 12.0, &mut rng).unwrap();
        assert_eq!(out.division, Some(DivisionPoints::new(0, 0)));
        assert!(out.fresh.is_empty());
        assert_eq!(out.budget.consumed(), 0.8);
    }

    #[test]
    fn static_hybrid_spends_everything() {
        let series = day(12, 3..9);
        let budget = split_budget(0.8, &DEFAULT_STATIC_SPLIT).unwrap();
        for seed in 0..20 {
            let mut rng = RandomSource::new(seed, 0);
            let out = static_hybrid(&series, &budget, ThresholdParams::new(10.0, 3, 0.5), 12.0, &mut rng).unwrap();
            assert_eq!(out.series.len(), 12);
            assert_eq!(out.budget.consumed(), 0.8);
            let w = out.division.unwrap();
            assert!(out.fresh.iter().all(|t| !w.contains(*t)));
        }
    }

    #[test]
    fn static_hybrid_rejects_wrong_split() {
        let series = day(6, 1..4);
        let budget = split_budget(1.0, &DEFAULT_DYNAMIC_SPLIT).unwrap();
        let mut rng = RandomSource::new(2, 0);
        assert!(static_hybrid(&series, &budget, ThresholdParams::new(1.0, 1, 0.5), 12.0, &mut rng).is_err());
    }

    #[test]
    fn constant_history_predicts_the_same_window() {
        // With one candidate dominating and a huge budget the selection is certain.
        let history: Vec<CountSeries> = (0..4).map(|_| day(12, 3..9)).collect();
        let mut rng = RandomSource::new(4, 0);
        let forecast = predict_division(&history, 1e6, 12.0, 0.01, 200_000, 12, &mut rng).unwrap();
        let first = forecast.historical[0];
        assert!(forecast.historical.iter().all(|w| *w == first));
        assert_eq!(forecast.predicted, Some(first));
    }

    #[test]
    fn dynamic_hybrid_needs_two_days() {
        let budget = split_budget(1.0, &DEFAULT_DYNAMIC_SPLIT).unwrap();
        let mut rng = RandomSource::new(2, 0);
        let current = day(8, 2..6);
        let params = DynamicParams::new(5.0, 2, 2, 0.5);
        assert!(matches!(
            dynamic_hybrid(core::slice::from_ref(&current), &current, &budget, params, &mut rng),
            Err(Error::TooFewDays { .. })
        ));
    }

    #[test]
    fn dynamic_hybrid_spends_everything() {
        let budget = split_budget(0.8, &DEFAULT_DYNAMIC_SPLIT).unwrap();
        let history: Vec<CountSeries> = (0..5).map(|_| day(12, 3..9)).collect();
        let current = day(12, 3..9);
        for seed in 0..10 {
            let mut rng = RandomSource::new(seed, 0);
            let out =
                dynamic_hybrid(&history, &current, &budget, DynamicParams::new(5.0, 3, 3, 0.5), &mut rng).unwrap();
            assert_eq!(out.series.len(), 12);
            assert_eq!(out.budget.consumed(), 0.8);
        }
    }
}
