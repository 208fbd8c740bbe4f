//! Utility metrics between a raw series and a published one.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{AggregatedSeries, CellValue, CountSeries};
use crate::{Error, Result};

/// Lower bound on MRE denominators.
pub const DEFAULT_GAMMA: f64 = 0.001;

/// Per-timestamp errors and their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub per_timestamp: Vec<f64>,
    pub mean: f64,
}

impl ErrorProfile {
    fn from_values(per_timestamp: Vec<f64>) -> Self {
        let mean = per_timestamp.iter().sum::<f64>() / per_timestamp.len() as f64;
        ErrorProfile { per_timestamp, mean }
    }
}

/// Which count divides the absolute error in MRE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MreDenominator {
    /// `max(γ, r_{t,i})` with the true count.
    #[default]
    Raw,
    /// `max(γ, r'_{t,i})` with the published count.
    Published,
}

/// Mean absolute error per timestamp, averaged over timestamps.
pub fn mae<T: CellValue>(raw: &CountSeries, published: &AggregatedSeries<T>) -> Result<ErrorProfile> {
    raw.ensure_same_shape(published)?;
    let per_timestamp = raw
        .histograms()
        .iter()
        .zip(published.histograms())
        .map(|(x, y)| {
            x.iter().zip(y.iter()).map(|(&r, &p)| libm::fabs(r as f64 - p.to_f64())).sum::<f64>() / x.len() as f64
        })
        .collect();
    Ok(ErrorProfile::from_values(per_timestamp))
}

/// Mean relative error per timestamp, averaged over timestamps.
pub fn mre<T: CellValue>(
    raw: &CountSeries,
    published: &AggregatedSeries<T>,
    gamma: f64,
    denominator: MreDenominator,
) -> Result<ErrorProfile> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", "must be positive"));
    }
    raw.ensure_same_shape(published)?;
    let per_timestamp = raw
        .histograms()
        .iter()
        .zip(published.histograms())
        .map(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .map(|(&r, &p)| {
                    let (r, p) = (r as f64, p.to_f64());
                    let base = match denominator {
                        MreDenominator::Raw => r,
                        MreDenominator::Published => p,
                    };
                    libm::fabs(r - p) / gamma.max(base)
                })
                .sum::<f64>()
                / x.len() as f64
        })
        .collect();
    Ok(ErrorProfile::from_values(per_timestamp))
}

/// MAE and MRE of one published series, with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    pub scheme: String,
    pub epsilon: f64,
    pub threshold: f64,
    pub seed: u64,
    pub gamma: f64,
    pub mae: ErrorProfile,
    pub mre: ErrorProfile,
}

impl UtilityReport {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate<T: CellValue>(
        raw: &CountSeries,
        published: &AggregatedSeries<T>,
        scheme: impl Into<String>,
        epsilon: f64,
        threshold: f64,
        seed: u64,
        gamma: f64,
        denominator: MreDenominator,
    ) -> Result<Self> {
        Ok(UtilityReport {
            scheme: scheme.into(),
            epsilon,
            threshold,
            seed,
            gamma,
            mae: mae(raw, published)?,
            mre: mre(raw, published, gamma, denominator)?,
        })
    }
}
