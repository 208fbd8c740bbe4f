//! Scheme dispatch shared by the CLI and the experiment runner.

use std::fmt;
use std::str::FromStr;

use mobdp_core::data::CountSeries;
use mobdp_core::dp::{split_budget, BudgetPart, PrivacyBudget, RandomSource};
use mobdp_core::schemes::{
    direct_perturb, dynamic_hybrid, static_hybrid, threshold_perturb, DynamicParams, Release, Scheme, ThresholdParams,
    DEFAULT_ALPHA, DEFAULT_DYNAMIC_SPLIT, DEFAULT_STATIC_SPLIT,
};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Threshold given directly or as a multiple of the day's mean adjacent distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdValue", into = "ThresholdValue")]
pub enum ThresholdRule {
    Absolute(f64),
    /// `factor · T̄`.
    MeanFraction(f64),
}

impl ThresholdRule {
    pub fn resolve(self, series: &CountSeries) -> Result<f64> {
        match self {
            ThresholdRule::Absolute(t) => Ok(t),
            ThresholdRule::MeanFraction(f) => {
                if series.len() < 2 {
                    return Ok(0.0);
                }
                Ok(f * series.adjacent_distances()?.mean)
            }
        }
    }
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::MeanFraction(0.25)
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Absolute(t) => write!(f, "{t}"),
            ThresholdRule::MeanFraction(x) if *x > 0.0 && (1.0 / x).fract() == 0.0 => write!(f, "Tbar/{}", 1.0 / x),
            ThresholdRule::MeanFraction(x) => write!(f, "{x}*Tbar"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    /// Accepts `12.5`, `Tbar`, `Tbar/4` and `0.25*Tbar`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::argument("threshold", format!("expected a number, `Tbar/k` or `f*Tbar`, got {s:?}"));
        let number = |v: &str| v.trim().parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0);
        let s = s.trim();
        let rule = if s.eq_ignore_ascii_case("tbar") {
            ThresholdRule::MeanFraction(1.0)
        } else if let Some(k) = s.strip_prefix("Tbar/").or_else(|| s.strip_prefix("tbar/")) {
            let k = number(k).filter(|k| *k > 0.0).ok_or_else(bad)?;
            ThresholdRule::MeanFraction(1.0 / k)
        } else if let Some(f) = s.strip_suffix("*Tbar").or_else(|| s.strip_suffix("*tbar")) {
            ThresholdRule::MeanFraction(number(f).ok_or_else(bad)?)
        } else {
            ThresholdRule::Absolute(number(s).ok_or_else(bad)?)
        };
        Ok(rule)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdValue {
    Number(f64),
    Text(String),
}

impl TryFrom<ThresholdValue> for ThresholdRule {
    type Error = Error;

    fn try_from(v: ThresholdValue) -> Result<Self> {
        match v {
            ThresholdValue::Number(t) => ThresholdRule::from_str(&t.to_string()),
            ThresholdValue::Text(s) => s.parse(),
        }
    }
}

impl From<ThresholdRule> for ThresholdValue {
    fn from(rule: ThresholdRule) -> Self {
        match rule {
            ThresholdRule::Absolute(t) => ThresholdValue::Number(t),
            other => ThresholdValue::Text(other.to_string()),
        }
    }
}

/// Parses `s=0.2,d=0.4,t=0.4` style budget splits.
pub fn parse_splits(s: &str) -> Result<Vec<(BudgetPart, f64)>> {
    s.split(',')
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Error::argument("splits", format!("expected `part=fraction`, got {item:?}")))?;
            let part = BudgetPart::from_name(name.trim())
                .ok_or_else(|| Error::argument("splits", format!("unknown budget part {name:?}")))?;
            let value = value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::argument("splits", format!("not a number: {value:?}")))?;
            Ok((part, value))
        })
        .collect()
}

pub fn format_splits(splits: &[(BudgetPart, f64)]) -> String {
    splits.iter().map(|(p, f)| format!("{}={f}", p.name())).collect::<Vec<_>>().join(",")
}

/// Everything a scheme run needs besides the data and the RNG.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishOptions {
    pub epsilon: f64,
    pub threshold: ThresholdRule,
    /// Cutoff of the threshold scheme and of the nighttime segments.
    pub cutoff: usize,
    /// Cutoff after the window in dynamic hybrid; defaults to `cutoff`.
    pub cutoff_after: Option<usize>,
    pub rho: f64,
    pub alpha: f64,
    /// Budget split for the hybrid schemes; their defaults when absent.
    pub splits: Option<Vec<(BudgetPart, f64)>>,
    pub beta: f64,
    pub iterations: usize,
}

impl PublishOptions {
    pub fn new(epsilon: f64) -> Self {
        PublishOptions {
            epsilon,
            threshold: ThresholdRule::default(),
            cutoff: 1,
            cutoff_after: None,
            rho: 0.5,
            alpha: DEFAULT_ALPHA,
            splits: None,
            beta: 0.01,
            iterations: 200_000,
        }
    }

    fn budget(&self, scheme: Scheme) -> Result<PrivacyBudget> {
        let split: Vec<(BudgetPart, f64)> = match (&self.splits, scheme) {
            (Some(s), _) => s.clone(),
            (None, Scheme::StaticHybrid) => DEFAULT_STATIC_SPLIT.to_vec(),
            (None, Scheme::DynamicHybrid) => DEFAULT_DYNAMIC_SPLIT.to_vec(),
            (None, _) => unreachable!("only hybrid schemes split the budget"),
        };
        Ok(split_budget(self.epsilon, &split)?)
    }
}

/// Runs `scheme` on `series`. `history` is only read by dynamic hybrid, which
/// needs at least two days.
pub fn publish(
    scheme: Scheme,
    series: &CountSeries,
    history: &[CountSeries],
    options: &PublishOptions,
    rng: &mut RandomSource,
) -> Result<Release> {
    let threshold = options.threshold.resolve(series)?;
    let cutoff = options.cutoff.min(series.len()).max(1);
    let params = ThresholdParams::new(threshold, cutoff, options.rho);
    let release = match scheme {
        Scheme::Direct => direct_perturb(series, options.epsilon, rng)?,
        Scheme::Threshold => threshold_perturb(series, options.epsilon, params, rng)?,
        Scheme::StaticHybrid => static_hybrid(series, &options.budget(scheme)?, params, options.alpha, rng)?,
        Scheme::DynamicHybrid => {
            let after = options.cutoff_after.unwrap_or(options.cutoff).min(series.len()).max(1);
            let mut dynamic = DynamicParams::new(threshold, cutoff, after, options.rho);
            dynamic.alpha = options.alpha;
            dynamic.beta = options.beta;
            dynamic.iterations = options.iterations;
            dynamic_hybrid(history, series, &options.budget(scheme)?, dynamic, rng)?
        }
    };
    Ok(release)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rules() {
        assert_eq!("Tbar/4".parse::<ThresholdRule>().unwrap(), ThresholdRule::MeanFraction(0.25));
        assert_eq!("0.5*Tbar".parse::<ThresholdRule>().unwrap(), ThresholdRule::MeanFraction(0.5));
        assert_eq!("Tbar".parse::<ThresholdRule>().unwrap(), ThresholdRule::MeanFraction(1.0));
        assert_eq!("30".parse::<ThresholdRule>().unwrap(), ThresholdRule::Absolute(30.0));
        assert!("Tbar/0".parse::<ThresholdRule>().is_err());
        assert!("-1".parse::<ThresholdRule>().is_err());
        assert_eq!(ThresholdRule::MeanFraction(0.25).to_string(), "Tbar/4");
    }

    #[test]
    fn threshold_json() {
        let r: ThresholdRule = serde_json::from_str("\"Tbar/4\"").unwrap();
        assert_eq!(r, ThresholdRule::MeanFraction(0.25));
        let r: ThresholdRule = serde_json::from_str("12").unwrap();
        assert_eq!(r, ThresholdRule::Absolute(12.0));
        assert_eq!(serde_json::to_string(&ThresholdRule::MeanFraction(0.25)).unwrap(), "\"Tbar/4\"");
    }

    #[test]
    fn resolves_against_mean_distance() {
        let series = CountSeries::from_rows(vec![vec![0, 4], vec![4, 0], vec![4, 0]], 60).unwrap();
        // distances 8 and 0
        assert_eq!(ThresholdRule::MeanFraction(0.25).resolve(&series).unwrap(), 1.0);
    }

    #[test]
    fn splits() {
        let s = parse_splits("s=0.2,d=0.4,t=0.4").unwrap();
        assert_eq!(s, vec![(BudgetPart::Selection, 0.2), (BudgetPart::Direct, 0.4), (BudgetPart::Threshold, 0.4)]);
        assert_eq!(format_splits(&s), "s=0.2,d=0.4,t=0.4");
        assert!(parse_splits("x=1").is_err());
        assert!(parse_splits("s0.2").is_err());
    }
}
